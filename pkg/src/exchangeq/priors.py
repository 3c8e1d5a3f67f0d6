"""Particle ensembles over state spaces and products of simplices."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tolerances as tol
from .errors import BadSpec, UnsupportedGrid, ValidationError
from .hilbert import DensityMatrix, pauli
from .rng import PRIOR_STREAM, map_chunks, particle_sum, substream

__all__ = [
    "PriorSpec",
    "ParticleEnsemble",
    "EnsembleSummary",
    "sample_prior",
    "ensemble_statistics",
    "bloch_grid",
    "normalize_log_weights",
    "prior_spec_from_json",
    "prior_spec_to_json",
]

KINDS = ("haar_pure", "hilbert_schmidt", "simplex_dirichlet", "product_dirichlet", "grid", "explicit")


@dataclass(frozen=True)
class PriorSpec:
    """Declarative prior.

    Fields used per kind:

    ``haar_pure``, ``hilbert_schmidt``: ``n``.
    ``simplex_dirichlet``: ``alpha``.
    ``product_dirichlet``: ``alphas`` and the matching factor ``labels``
    (measurement ids).
    ``grid``: ``n`` (must be 2) and ``resolution`` (lattice points per axis).
    ``explicit``: ``points`` as ``(point, weight)`` pairs, where a point is a
    density matrix, or a dict ``{label: probability vector}``, or a single
    probability vector.
    """

    kind: str
    seed: int = 0
    n: Optional[int] = None
    alpha: Optional[tuple] = None
    alphas: Optional[tuple] = None
    labels: Optional[tuple] = None
    resolution: Optional[int] = None
    points: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadSpec(f"unknown prior kind {self.kind!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise BadSpec(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        k = self.kind
        if k in ("haar_pure", "hilbert_schmidt", "grid"):
            if self.n is None or self.n < 2:
                raise BadSpec(f"{k} prior needs dimension n >= 2")
        if k == "grid":
            if self.n != 2:
                raise UnsupportedGrid(f"grid priors exist only for n = 2, got n = {self.n}")
            if self.resolution is None or self.resolution < 2:
                raise BadSpec("grid resolution must be at least 2")
        if k == "simplex_dirichlet":
            object.__setattr__(self, "alpha", _check_alpha(self.alpha))
        if k == "product_dirichlet":
            if not self.alphas:
                raise BadSpec("product_dirichlet needs at least one alpha vector")
            alphas = tuple(_check_alpha(a) for a in self.alphas)
            object.__setattr__(self, "alphas", alphas)
            labels = tuple(self.labels) if self.labels else tuple(str(i) for i in range(len(alphas)))
            if len(labels) != len(alphas) or len(set(labels)) != len(labels):
                raise BadSpec("product_dirichlet labels must be unique, one per alpha vector")
            object.__setattr__(self, "labels", labels)
        if k == "explicit":
            if not self.points:
                raise BadSpec("explicit prior needs at least one point")
            w = np.array([p[1] for p in self.points], dtype=float)
            if w.min() < 0 or abs(w.sum() - 1) > tol.WEIGHTS_TOL:
                raise BadSpec(f"explicit weights must form a probability vector (sum {w.sum()!r})")
            object.__setattr__(self, "points", tuple(tuple(p) for p in self.points))


def _check_alpha(alpha):
    if alpha is None:
        raise BadSpec("missing Dirichlet concentration vector")
    a = tuple(float(x) for x in alpha)
    if len(a) < 2 or min(a) <= 0:
        raise BadSpec(f"Dirichlet concentrations must be positive, at least two, got {a}")
    return a


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Weighted particles.

    ``kind == "density"``: ``points`` is a ``(N, n, n)`` complex array of
    density matrices. ``kind == "simplex"``: ``points`` is a tuple of
    ``(N, k_j)`` arrays, one per factor named in ``labels``.
    ``exact`` marks deterministic quadratures (grid, explicit) whose
    averages carry no Monte Carlo error.
    """

    kind: str
    points: object
    log_weights: np.ndarray
    provenance: dict = field(default_factory=dict)
    labels: Optional[tuple] = None
    exact: bool = False

    def __post_init__(self):
        lw = np.array(self.log_weights, dtype=float, copy=True).ravel()
        if lw.size < 1:
            raise ValidationError("an ensemble needs at least one particle")
        if self.kind == "density":
            pts = np.array(self.points, dtype=complex, copy=True)
            if pts.ndim != 3 or pts.shape[0] != lw.size:
                raise ValidationError(f"{pts.shape[0] if pts.ndim else 0} points for {lw.size} weights")
            pts.setflags(write=False)
        elif self.kind == "simplex":
            pts = tuple(np.array(p, dtype=float, copy=True) for p in self.points)
            for p in pts:
                if p.ndim != 2 or p.shape[0] != lw.size:
                    raise ValidationError("simplex factor does not match the particle count")
                p.setflags(write=False)
            labels = tuple(self.labels) if self.labels else tuple(str(i) for i in range(len(pts)))
            object.__setattr__(self, "labels", labels)
        else:
            raise ValidationError(f"unknown ensemble kind {self.kind!r}")
        lw = normalize_log_weights(lw)
        lw.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "log_weights", lw)

    def __len__(self):
        return self.log_weights.size

    @property
    def dim(self):
        return self.points.shape[1] if self.kind == "density" else None

    def weights(self):
        return np.exp(self.log_weights)

    def reweighted(self, log_weights, **provenance):
        prov = dict(self.provenance)
        prov.update(provenance)
        return ParticleEnsemble(self.kind, self.points, log_weights, prov, self.labels, self.exact)

    def take(self, index, **provenance):
        """New equally weighted ensemble of the particles at ``index``."""
        index = np.asarray(index)
        if self.kind == "density":
            pts = self.points[index]
        else:
            pts = tuple(p[index] for p in self.points)
        prov = dict(self.provenance)
        prov.update(provenance)
        return ParticleEnsemble(self.kind, pts, np.zeros(index.size), prov, self.labels, False)


def normalize_log_weights(lw):
    """Shift log weights so that their exponentials sum to one."""
    lw = np.asarray(lw, dtype=float)
    m = np.max(lw)
    if not np.isfinite(m):
        raise ValidationError("log weights have no finite maximum")
    return lw - (m + np.log(particle_sum(np.exp(lw - m))))


# -- samplers -----------------------------------------------------------------


def _normals(seed, lo, hi, size):
    raw = np.empty((hi - lo, size))
    for i in range(lo, hi):
        raw[i - lo] = substream(seed, i, PRIOR_STREAM).standard_normal(size)
    return raw


def _haar_chunk(seed, n):
    def run(lo, hi):
        raw = _normals(seed, lo, hi, 2 * n)
        z = raw[:, :n] + 1j * raw[:, n:]
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return z[:, :, None] * z.conj()[:, None, :]

    return run


def _hs_chunk(seed, n):
    def run(lo, hi):
        raw = _normals(seed, lo, hi, 2 * n * n)
        g = (raw[:, : n * n] + 1j * raw[:, n * n :]).reshape(-1, n, n)
        rho = g @ np.conj(np.swapaxes(g, 1, 2))
        rho = (rho + np.conj(np.swapaxes(rho, 1, 2))) / 2
        return rho / np.einsum("kii->k", rho).real[:, None, None]

    return run


def _dirichlet_chunk(seed, alphas):
    def run(lo, hi):
        outs = [np.empty((hi - lo, len(a))) for a in alphas]
        for i in range(lo, hi):
            g = substream(seed, i, PRIOR_STREAM)
            for out, a in zip(outs, alphas):
                out[i - lo] = g.dirichlet(a)
        return outs

    return run


def bloch_grid(resolution):
    """Cell centres of a ``resolution**3`` cubic lattice on [-1, 1]^3 lying in the unit ball."""
    c = (np.arange(resolution) + 0.5) / resolution * 2 - 1
    x, y, z = np.meshgrid(c, c, c, indexing="ij")
    inside = x**2 + y**2 + z**2 <= 1.0
    return np.stack([x[inside], y[inside], z[inside]], axis=1)


def _bloch_to_density(r):
    mats = np.eye(2, dtype=complex)[None] + np.einsum("ka,aij->kij", r, np.stack([pauli(a) for a in "xyz"]))
    return mats / 2


def _check_density_stack(pts):
    herm = np.max(np.abs(pts - np.conj(np.swapaxes(pts, 1, 2))))
    tr = np.max(np.abs(np.einsum("kii->k", pts).real - 1))
    lo = np.min(np.linalg.eigvalsh(pts))
    if herm > tol.HERMITIAN_TOL or tr > tol.TRACE_TOL or lo < -tol.POSITIVITY_TOL:
        raise ValidationError(
            f"sampled point violates density invariants (hermitian {herm:.2e}, trace {tr:.2e}, min eig {lo:.2e})"
        )


def _check_simplex_stack(pts):
    for p in pts:
        dev = max(float(np.max(np.abs(p.sum(axis=1) - 1))), float(-p.min()))
        if dev > tol.WEIGHTS_TOL:
            raise ValidationError(f"sampled simplex point off the simplex by {dev:.2e}")


def _explicit_ensemble(spec):
    pts, weights = zip(*spec.points)
    w = np.array(weights, dtype=float)
    with np.errstate(divide="ignore"):
        lw = np.log(w)
    prov = {"generator": "explicit", "seed": int(spec.seed)}
    first = pts[0]
    if isinstance(first, DensityMatrix) or (np.ndim(first) == 2 and not isinstance(first, dict)):
        mats = np.stack([p.matrix if isinstance(p, DensityMatrix) else DensityMatrix(p).matrix for p in pts])
        return ParticleEnsemble("density", mats, lw, prov, exact=True)
    if isinstance(first, dict):
        labels = tuple(first)
        factors = [np.stack([np.asarray(p[lab], dtype=float) for p in pts]) for lab in labels]
    else:
        labels = None
        factors = [np.stack([np.asarray(p, dtype=float) for p in pts])]
    _check_simplex_stack(factors)
    return ParticleEnsemble("simplex", factors, lw, prov, labels, exact=True)


def sample_prior(spec, count, threads=1):
    """Draw a particle ensemble from ``spec``.

    The result is a deterministic function of ``(spec, count)``: particle
    ``i`` is drawn from its own counter-based substream, so ``threads`` has no
    effect on the output. ``grid`` and ``explicit`` priors ignore ``count``
    and return their full, exactly weighted point sets.
    """
    if count < 1:
        raise BadSpec(f"particle count must be positive, got {count}")
    seed = int(spec.seed)
    prov = {"generator": f"philox4x64:{spec.kind}", "seed": seed, "count": int(count)}
    if spec.kind == "explicit":
        return _explicit_ensemble(spec)
    if spec.kind == "grid":
        r = bloch_grid(spec.resolution)
        pts = _bloch_to_density(r)
        prov = {"generator": "bloch_grid", "resolution": int(spec.resolution), "seed": seed, "count": len(r)}
        return ParticleEnsemble("density", pts, np.zeros(len(r)), prov, exact=True)
    if spec.kind in ("haar_pure", "hilbert_schmidt"):
        fn = _haar_chunk(seed, spec.n) if spec.kind == "haar_pure" else _hs_chunk(seed, spec.n)
        pts = np.concatenate(map_chunks(fn, count, threads))
        _check_density_stack(pts)
        return ParticleEnsemble("density", pts, np.zeros(count), prov)
    alphas = (spec.alpha,) if spec.kind == "simplex_dirichlet" else spec.alphas
    labels = None if spec.kind == "simplex_dirichlet" else spec.labels
    parts = map_chunks(_dirichlet_chunk(seed, alphas), count, threads)
    factors = [np.concatenate([p[j] for p in parts]) for j in range(len(alphas))]
    _check_simplex_stack(factors)
    return ParticleEnsemble("simplex", factors, np.zeros(count), prov, labels)


# -- summaries ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    ess: float
    mean_state: Optional[DensityMatrix] = None
    mean_purity: Optional[float] = None
    mean_vectors: Optional[dict] = None


def ensemble_statistics(e):
    """Effective sample size, weighted mean state and weighted mean purity."""
    w = e.weights()
    ess = float(1.0 / particle_sum(w * w))
    if e.kind == "density":
        mean = particle_sum(w[:, None, None] * e.points)
        mean = (mean + mean.conj().T) / 2
        mean = mean / np.trace(mean).real
        purity = np.einsum("kab,kba->k", e.points, e.points).real
        return EnsembleSummary(ess, DensityMatrix(mean), float(particle_sum(w * purity)))
    vectors = {lab: particle_sum(w[:, None] * p) for lab, p in zip(e.labels, e.points)}
    return EnsembleSummary(ess, mean_vectors=vectors)


# -- JSON ---------------------------------------------------------------------


def prior_spec_from_json(obj):
    """Build a PriorSpec from a scenario ``prior`` block."""
    from .hilbert import matrix_from_json

    kind = obj.get("kind")
    seed = obj.get("seed")
    if seed is None:
        raise BadSpec("prior seed must be given explicitly")
    kw = {"kind": kind, "seed": int(seed)}
    if "n" in obj:
        kw["n"] = int(obj["n"])
    if "resolution" in obj:
        kw["resolution"] = int(obj["resolution"])
    if "alpha" in obj:
        kw["alpha"] = tuple(obj["alpha"])
    if "alphas" in obj:
        alphas = obj["alphas"]
        if isinstance(alphas, dict):
            kw["labels"] = tuple(alphas)
            kw["alphas"] = tuple(tuple(a) for a in alphas.values())
        else:
            kw["alphas"] = tuple(tuple(a) for a in alphas)
    if "points" in obj:
        pts = []
        for p in obj["points"]:
            if "state" in p:
                point = DensityMatrix(matrix_from_json(p["state"]))
            elif "eta" in p:
                eta = p["eta"]
                point = {k: tuple(v) for k, v in eta.items()} if isinstance(eta, dict) else tuple(eta)
            else:
                point = tuple(p["vector"])
            pts.append((point, float(p["weight"])))
        kw["points"] = tuple(pts)
    return PriorSpec(**kw)


def prior_spec_to_json(spec):
    from .hilbert import matrix_to_json

    out = {"kind": spec.kind, "seed": int(spec.seed)}
    if spec.n is not None:
        out["n"] = spec.n
    if spec.resolution is not None:
        out["resolution"] = spec.resolution
    if spec.alpha is not None:
        out["alpha"] = list(spec.alpha)
    if spec.alphas is not None:
        out["alphas"] = {lab: list(a) for lab, a in zip(spec.labels, spec.alphas)}
    if spec.points is not None:
        pts = []
        for point, w in spec.points:
            if isinstance(point, DensityMatrix):
                pts.append({"state": matrix_to_json(point), "weight": w})
            elif isinstance(point, dict):
                pts.append({"eta": {k: list(v) for k, v in point.items()}, "weight": w})
            else:
                pts.append({"vector": list(point), "weight": w})
        out["points"] = pts
    return out
