"""Predictive probabilities and posterior updates for exchangeable models.

One engine serves every model. A model maps each particle to a table of
outcome probabilities ``eta_M`` per measurement kind ``M``; given those
tables, the likelihood of a record is a product of categorical
probabilities, and the predictive is its prior-weighted mixture. Quantum
and classical models obtain ``eta_M`` from a state through the vector
formula; the product-of-simplices model reads ``eta_M`` off the particle
directly. The quantum model is therefore the general model with particles
restricted to the image of the state space.
"""

from collections.abc import Mapping
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .errors import (
    AllWeightsZero,
    BadPermutation,
    InferenceError,
    ModelMismatch,
    UnknownMeasurement,
    ZeroProbabilityOutcome,
)
from .gpt import (
    GptMeasurement,
    GptState,
    embed_povm,
    embed_states,
    row_dot,
    standard_basis,
)
from .hilbert import DensityMatrix, Povm, clamp_probability
from .priors import ParticleEnsemble, normalize_log_weights, sample_prior
from .rng import RESAMPLE_STREAM, map_chunks, particle_sum, substream

__all__ = [
    "ExperimentRecord",
    "PredictiveResult",
    "PartialExchangeableResult",
    "StateModel",
    "SimplexProductModel",
    "make_model",
    "likelihood",
    "log_likelihoods",
    "predictive",
    "posterior_update",
    "exchangeable_predictive",
    "partial_exch_predictive",
    "dirichlet_multinomial_logprob",
    "exchangeability_check",
    "exchangeability_report",
    "outcome_parameters",
    "systematic_resample",
]


class OutcomeOutOfRange(InferenceError, IndexError):
    pass


class ExchangeabilityViolation(InferenceError):
    pass


@dataclass(frozen=True)
class ExperimentRecord:
    """Ordered ``(measurement_id, outcome_index)`` steps."""

    steps: tuple = ()

    def __post_init__(self):
        steps = tuple((str(m), int(o)) for m, o in self.steps)
        if any(o < 0 for _, o in steps):
            raise OutcomeOutOfRange("negative outcome index in record")
        object.__setattr__(self, "steps", steps)

    def __len__(self):
        return len(self.steps)

    def extended(self, measurement, outcome):
        return ExperimentRecord(self.steps + ((measurement, outcome),))

    def permuted(self, permutation):
        """Record whose ``i``-th step is ``steps[permutation[i]]``."""
        perm = [int(p) for p in permutation]
        if sorted(perm) != list(range(len(self.steps))):
            raise BadPermutation(f"{perm} is not a permutation of {len(self.steps)} steps")
        return ExperimentRecord(tuple(self.steps[p] for p in perm))

    def to_json(self):
        return {"steps": [[m, o] for m, o in self.steps]}

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(tuple(s) for s in obj["steps"]))


@dataclass(frozen=True)
class PredictiveResult:
    """``log p(D_1, D_2, ... | M_1, M_2, ..., H)`` and its Monte Carlo error.

    ``mc_std_error`` is the standard error of the probability (not its
    log); it is exactly zero for exact quadratures. ``posterior_ess`` is the
    effective sample size of the prior weights times likelihoods.
    """

    log_probability: float
    mc_std_error: float
    particle_count: int
    ess: float
    posterior_ess: float
    exact: bool = False

    @property
    def probability(self):
        return float(np.exp(self.log_probability))

    def to_json(self):
        return {
            "log_probability": self.log_probability,
            "probability": self.probability,
            "mc_std_error": self.mc_std_error,
            "particle_count": self.particle_count,
            "ess": self.ess,
            "posterior_ess": self.posterior_ess,
            "exact": self.exact,
        }


# -- models -------------------------------------------------------------------


class StateModel:
    """Particles are states; ``eta_M`` comes from the vector formula.

    ``measurements`` maps ids to :class:`Povm` (embedded in the standard
    basis) or :class:`GptMeasurement`. Density-matrix particles are embedded
    with the same basis; single-factor simplex particles are used as
    classical state vectors.
    """

    def __init__(self, measurements):
        meas = {}
        for mid, m in measurements.items():
            if isinstance(m, Povm):
                m = embed_povm(m, standard_basis(m.dim))
            if not isinstance(m, GptMeasurement):
                raise ModelMismatch(f"measurement {mid!r} is not a POVM or effect list")
            meas[str(mid)] = m
        dims = {m.dim_real for m in meas.values()}
        if len(dims) > 1:
            raise ModelMismatch("measurements act on vectors of different lengths")
        self.measurements = meas
        self.real_dim = dims.pop() if dims else None

    @property
    def outcome_counts(self):
        return {mid: len(m) for mid, m in self.measurements.items()}

    def state_vectors(self, ensemble, lo, hi):
        if ensemble.kind == "density":
            n = ensemble.points.shape[1]
            s = embed_states(ensemble.points[lo:hi], standard_basis(n))
        elif ensemble.kind == "simplex" and len(ensemble.points) == 1:
            s = ensemble.points[0][lo:hi]
        else:
            raise ModelMismatch("a state model needs density-matrix or single-simplex particles")
        if self.real_dim is not None and s.shape[1] != self.real_dim:
            raise ModelMismatch(f"particles of length {s.shape[1]} with measurements of length {self.real_dim}")
        return s

    def tables(self, ensemble, ids, lo, hi):
        s = self.state_vectors(ensemble, lo, hi)
        return {mid: clamp_probability(row_dot(s, self.measurements[mid].effects)) for mid in ids}


class SimplexProductModel:
    """Particles are tuples ``(eta_M)``, one probability vector per measurement kind."""

    def __init__(self, outcome_counts):
        self._counts = {str(k): int(v) for k, v in outcome_counts.items()}

    @property
    def outcome_counts(self):
        return dict(self._counts)

    def tables(self, ensemble, ids, lo, hi):
        if ensemble.kind != "simplex":
            raise ModelMismatch("the product-of-simplices model needs simplex particles")
        factors = dict(zip(ensemble.labels, ensemble.points))
        if len(ensemble.points) == 1 and len(self._counts) == 1:
            factors = {next(iter(self._counts)): ensemble.points[0]}
        out = {}
        for mid in ids:
            if mid not in factors:
                raise ModelMismatch(f"prior has no factor for measurement {mid!r}")
            t = factors[mid]
            if t.shape[1] != self._counts[mid]:
                raise ModelMismatch(f"factor {mid!r} has {t.shape[1]} outcomes, registry says {self._counts[mid]}")
            out[mid] = t[lo:hi]
        return out


def make_model(registry):
    """Model for a registry: ids to outcome counts, or ids to measurements."""
    if isinstance(registry, (StateModel, SimplexProductModel)):
        return registry
    if not isinstance(registry, Mapping):
        raise ModelMismatch("registry must be a mapping from measurement ids")
    if registry and all(isinstance(v, (int, np.integer)) for v in registry.values()):
        return SimplexProductModel(registry)
    return StateModel(registry)


# -- likelihood engine --------------------------------------------------------


def _outcome_counts(record, model):
    sizes = model.outcome_counts
    counts = {}
    for mid, o in record.steps:
        if mid not in sizes:
            raise UnknownMeasurement(f"record refers to unknown measurement {mid!r}")
        if o >= sizes[mid]:
            raise OutcomeOutOfRange(f"outcome {o} out of range for measurement {mid!r} with {sizes[mid]} outcomes")
        counts.setdefault(mid, np.zeros(sizes[mid], dtype=np.int64))[o] += 1
    # Registry order, not record order: the sum is then permutation invariant.
    return {mid: counts[mid] for mid in sizes if mid in counts}


def _categorical_loglik(tables, counts, size):
    ll = np.zeros(size)
    with np.errstate(divide="ignore"):
        for mid, c in counts.items():
            t = tables[mid]
            for o in np.flatnonzero(c):
                ll += c[o] * np.log(t[:, o])
    return ll


def log_likelihoods(ensemble, record, registry, threads=1):
    """Per-particle ``sum_i log p(D_i | M_i, point)``; ``-inf`` marks impossible data."""
    model = make_model(registry)
    counts = _outcome_counts(record, model)

    def run(lo, hi):
        return _categorical_loglik(model.tables(ensemble, list(counts), lo, hi), counts, hi - lo)

    return np.concatenate(map_chunks(run, len(ensemble), threads))


def _single_point_ensemble(point):
    if isinstance(point, ParticleEnsemble):
        return point
    if isinstance(point, DensityMatrix):
        return ParticleEnsemble("density", point.matrix[None], [0.0])
    if isinstance(point, GptState):
        return ParticleEnsemble("simplex", [point.coords[None]], [0.0])
    if isinstance(point, Mapping):
        labels = tuple(point)
        return ParticleEnsemble("simplex", [np.asarray(point[k], float)[None] for k in labels], [0.0], labels=labels)
    arr = np.asarray(point)
    if arr.ndim == 2 and np.iscomplexobj(arr):
        return _single_point_ensemble(DensityMatrix(arr))
    return ParticleEnsemble("simplex", [np.asarray(point, float)[None]], [0.0])


def likelihood(point, record, registry, strict=False):
    """Log-likelihood of ``record`` at one parameter point.

    ``point`` is a DensityMatrix, a GptState, a probability vector, or a
    mapping ``{measurement_id: probability vector}``. Data of probability
    zero give ``-inf``, or raise ZeroProbabilityOutcome when ``strict``.
    """
    ens = _single_point_ensemble(point)
    model = make_model(registry)
    ll = float(log_likelihoods(ens, record, model)[0])
    if strict and ll == -np.inf:
        tables = model.tables(ens, [m for m, _ in record.steps], 0, 1)
        for i, (mid, o) in enumerate(record.steps):
            if tables[mid][0, o] == 0:
                raise ZeroProbabilityOutcome(f"step {i} ({mid!r}, {o}) has probability zero at this point")
    return ll


def _mixture(log_weights, ll, exact):
    """Stable ``log sum_k w_k exp(ll_k)`` with the standard error of the sum."""
    w = np.exp(log_weights)
    ess = float(1.0 / particle_sum(w * w))
    a = log_weights + ll
    top = np.max(a)
    n = ll.size
    if top == -np.inf:
        return PredictiveResult(-np.inf, 0.0, n, ess, 0.0, exact)
    log_p = float(top + np.log(particle_sum(np.exp(a - top))))
    post = np.exp(a - log_p)
    posterior_ess = float(1.0 / particle_sum(post * post))
    if exact:
        se = 0.0
    else:
        m = np.max(ll)
        scaled = np.exp(ll - m)
        mean = particle_sum(w * scaled)
        se = float(np.sqrt(particle_sum(w * w * (scaled - mean) ** 2)) * np.exp(m))
    return PredictiveResult(log_p, se, n, ess, posterior_ess, exact)


def predictive(ensemble, record, registry, threads=1):
    """Mixture over the ensemble of the product of per-step outcome probabilities."""
    ll = log_likelihoods(ensemble, record, registry, threads)
    return _mixture(ensemble.log_weights, ll, ensemble.exact)


def posterior_update(ensemble, record, registry, threads=1, resample=False):
    """Importance-reweight ``ensemble`` by the likelihood of ``record``.

    Points are kept; with ``resample=True`` a systematic resampling step
    follows, driven by its own substream.
    """
    if not record.steps:
        return ensemble
    ll = log_likelihoods(ensemble, record, registry, threads)
    lw = ensemble.log_weights + ll
    if np.max(lw) == -np.inf:
        raise AllWeightsZero(f"every particle assigns probability zero to the {len(record)}-step record")
    out = ensemble.reweighted(normalize_log_weights(lw), updates=ensemble.provenance.get("updates", 0) + 1)
    return systematic_resample(out) if resample else out


def systematic_resample(ensemble):
    """Systematic resampling with one uniform from the resampling substream."""
    gen = int(ensemble.provenance.get("resamples", 0))
    seed = int(ensemble.provenance.get("seed", 0))
    u = substream(seed, gen, RESAMPLE_STREAM).random()
    n = len(ensemble)
    cdf = np.cumsum(ensemble.weights())
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, (u + np.arange(n)) / n, side="right")
    return ensemble.take(np.minimum(idx, n - 1), resamples=gen + 1)


# -- special forms ------------------------------------------------------------


def exchangeable_predictive(ensemble, outcomes):
    """Predictive of an outcome sequence under plain exchangeability.

    ``ensemble`` holds single-simplex particles ``theta``; each outcome index
    is a categorical draw from ``theta``.
    """
    if ensemble.kind != "simplex" or len(ensemble.points) != 1:
        raise ModelMismatch("plain exchangeability needs single-simplex particles")
    theta = ensemble.points[0]
    k = theta.shape[1]
    c = np.zeros(k, dtype=np.int64)
    for o in outcomes:
        if not 0 <= int(o) < k:
            raise OutcomeOutOfRange(f"outcome {o} out of range for {k} categories")
        c[int(o)] += 1

    def run(lo, hi):
        return _categorical_loglik({0: theta[lo:hi]}, {0: c}, hi - lo)

    ll = np.concatenate(map_chunks(run, len(ensemble)))
    return _mixture(ensemble.log_weights, ll, ensemble.exact)


def dirichlet_multinomial_logprob(alpha, counts):
    """Log probability of one particular sequence with outcome ``counts`` under Dirichlet(``alpha``)."""
    a = np.asarray(alpha, dtype=float)
    c = np.asarray(counts, dtype=float)
    return float(gammaln(a.sum()) - gammaln(a.sum() + c.sum()) + np.sum(gammaln(a + c) - gammaln(a)))


@dataclass(frozen=True)
class PartialExchangeableResult:
    """Monte Carlo predictive and, for product-Dirichlet priors, its closed form."""

    mc: PredictiveResult
    closed_form_log_probability: Optional[float] = None

    @property
    def agrees(self):
        """Closed form within three standard errors of the estimate (None without a closed form)."""
        if self.closed_form_log_probability is None:
            return None
        diff = abs(np.exp(self.closed_form_log_probability) - self.mc.probability)
        return bool(diff <= 3 * self.mc.mc_std_error)


def partial_exch_predictive(prior, record, registry, count=None, threads=1, ensemble=None):
    """Predictive over a product of simplices, one categorical parameter per measurement kind.

    ``prior`` is a product-Dirichlet, single Dirichlet or explicit PriorSpec,
    sampled with ``count`` particles unless a ready ``ensemble`` drawn from
    it is passed; ``prior`` may also be a simplex ParticleEnsemble itself.
    ``registry`` maps measurement ids to outcome counts.
    """
    model = SimplexProductModel(registry)
    spec = None
    if isinstance(prior, ParticleEnsemble):
        ensemble = prior
    else:
        spec = prior
        if spec.kind not in ("product_dirichlet", "simplex_dirichlet", "explicit"):
            raise ModelMismatch(f"{spec.kind} is not a prior over a product of simplices")
        if ensemble is None:
            ensemble = sample_prior(spec, count or 1, threads)
    mc = predictive(ensemble, record, model, threads)
    closed = None
    if spec is not None and spec.kind in ("product_dirichlet", "simplex_dirichlet"):
        counts = _outcome_counts(record, model)
        if spec.kind == "simplex_dirichlet":
            alphas = {next(iter(model.outcome_counts)): spec.alpha}
        else:
            alphas = dict(zip(spec.labels, spec.alphas))
        closed = sum(dirichlet_multinomial_logprob(alphas[mid], c) for mid, c in counts.items())
    return PartialExchangeableResult(mc, closed)


def _preserves_kinds(record, permutation):
    permuted = record.permuted(permutation)
    return all(a[0] == b[0] for a, b in zip(record.steps, permuted.steps)), permuted


def exchangeability_check(record, permutation, ensemble, registry):
    """True iff ``permutation`` only reorders steps of the same measurement kind.

    In that case the predictive of the permuted record is computed with the
    same ensemble and must agree within 1e-12, else ExchangeabilityViolation.
    """
    within, permuted = _preserves_kinds(record, permutation)
    if within:
        a = predictive(ensemble, record, registry)
        b = predictive(ensemble, permuted, registry)
        if not _close(a, b):
            raise ExchangeabilityViolation(
                f"within-kind permutation changed the predictive: {a.probability!r} vs {b.probability!r}"
            )
    return within


def _close(a, b, atol=1e-12):
    return bool(abs(a.probability - b.probability) <= atol)


def exchangeability_report(record, permutation, ensemble, registry):
    """Compare predictives of a record and its permutation.

    ``stronger_symmetry`` is set when a permutation mixing measurement kinds
    still leaves the predictive unchanged: the model is then symmetric
    beyond what partial exchangeability requires.
    """
    within, permuted = _preserves_kinds(record, permutation)
    a = predictive(ensemble, record, registry)
    b = predictive(ensemble, permuted, registry)
    equal = _close(a, b)
    if within and not equal:
        raise ExchangeabilityViolation("within-kind permutation changed the predictive")
    return {
        "within_kind": within,
        "equal": equal,
        "difference": abs(a.probability - b.probability),
        "stronger_symmetry": bool(equal and not within),
        "original": a.to_json(),
        "permuted": b.to_json(),
    }


def outcome_parameters(state, registry):
    """Per-measurement outcome probabilities ``(eta_M)`` of a single state."""
    model = StateModel(registry) if not isinstance(registry, StateModel) else registry
    ens = _single_point_ensemble(state)
    tables = model.tables(ens, list(model.measurements), 0, 1)
    return {mid: t[0] for mid, t in tables.items()}
