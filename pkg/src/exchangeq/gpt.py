"""Real-vector representation of states and effects.

A quantum state ``rho`` and an effect ``E`` of dimension ``n`` are mapped to
real vectors of length ``n**2`` by taking Hilbert-Schmidt components in an
orthonormal Hermitian basis, so that ``tr(E rho) == o . s``. Classical and
custom systems are given directly by their vectors.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import tolerances as tol
from .errors import (
    DimensionMismatch,
    DuplicateLabel,
    InvalidSystem,
    LengthMismatch,
    ValidationError,
)
from .hilbert import DensityMatrix, Effect, Povm, clamp_probability, gellmann

__all__ = [
    "HermitianBasis",
    "GptState",
    "GptEffect",
    "GptMeasurement",
    "GptSystem",
    "Distinguishability",
    "standard_basis",
    "embed_state",
    "embed_states",
    "unembed_state",
    "embed_effect",
    "unembed_effect",
    "embed_povm",
    "vector_probability",
    "measurement_distribution",
    "classical_system",
    "quantum_system",
    "custom_system",
    "perfectly_distinguishable",
    "distinguishing_measurement",
    "apply_linear_map",
    "row_dot",
    "system_to_json",
    "system_from_json",
]


def _frozen_real(x):
    a = np.array(x, dtype=float, copy=True).ravel()
    a.setflags(write=False)
    return a


def row_dot(x, w):
    """``x @ w.T`` for 2-D real arrays, summed in a fixed index order.

    Each output entry depends only on its own row of ``x``, never on how many
    rows are processed together, which keeps chunked and threaded evaluation
    bit-identical to serial evaluation.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    out = np.zeros((x.shape[0], w.shape[0]))
    for c in range(x.shape[1]):
        out += x[:, c, None] * w[None, :, c]
    return out


@dataclass(frozen=True, eq=False)
class HermitianBasis:
    """Hilbert-Schmidt orthonormal Hermitian basis, identity element first."""

    dim: int
    elements: np.ndarray  # (n*n, n, n)

    def __post_init__(self):
        el = np.array(self.elements, dtype=complex)
        n = self.dim
        if el.shape != (n * n, n, n):
            raise DimensionMismatch(f"basis of shape {el.shape} for dimension {n}")
        gram = np.einsum("aij,bji->ab", el, el)
        dev = float(np.max(np.abs(gram - np.eye(n * n))))
        if dev > tol.BASIS_TOL:
            raise ValidationError(f"basis is not Hilbert-Schmidt orthonormal (deviation {dev:.3e})", dev)
        if np.max(np.abs(el[0] - np.eye(n) / np.sqrt(n))) > tol.BASIS_TOL:
            raise ValidationError("first basis element must be I/sqrt(n)")
        traces = np.abs(np.einsum("aii->a", el[1:]))
        if traces.size and traces.max() > tol.BASIS_TOL:
            raise ValidationError("non-identity basis elements must be traceless")
        el.setflags(write=False)
        object.__setattr__(self, "elements", el)
        # Real-linear form of s_a = Re tr(B_a X): s = re(X^T) . Br - im(X^T) . Bi
        flat = el.reshape(n * n, n * n)
        object.__setattr__(self, "_re", np.ascontiguousarray(flat.real))
        object.__setattr__(self, "_im", np.ascontiguousarray(flat.imag))

    @property
    def real_dim(self):
        return self.dim * self.dim

    def components(self, matrices):
        """Hilbert-Schmidt components of a stack ``(N, n, n)`` of Hermitian matrices."""
        m = np.asarray(matrices, dtype=complex)
        xt = np.swapaxes(m, -1, -2).reshape(m.shape[0], -1)
        return row_dot(xt.real, self._re) - row_dot(xt.imag, self._im)

    def imaginary_components(self, matrices):
        m = np.asarray(matrices, dtype=complex)
        xt = np.swapaxes(m, -1, -2).reshape(m.shape[0], -1)
        return row_dot(xt.real, self._im) + row_dot(xt.imag, self._re)

    def matrix(self, coords):
        """``sum_a coords[a] B_a``."""
        return np.tensordot(np.asarray(coords, dtype=float), self.elements, axes=1)


@lru_cache(maxsize=None)
def standard_basis(n):
    """Identity plus generalized Gell-Mann matrices, all with HS norm 1.

    Order: ``I/sqrt(n)``; then for each pair ``j < k`` (lexicographic) the
    symmetric and then the antisymmetric off-diagonal matrix; then the
    diagonal matrices for ``j = 1 .. n-1``. For ``n = 2`` this is
    ``(I, X, Y, Z) / sqrt(2)``.
    """
    if n < 2:
        raise ValueError("dimension must be at least 2")
    els = [np.eye(n, dtype=complex)]
    for j in range(1, n + 1):
        for k in range(j + 1, n + 1):
            els.append(gellmann(k, j, n))
            els.append(gellmann(j, k, n))
    for j in range(1, n):
        els.append(gellmann(j, j, n))
    els = np.stack(els)
    els[0] /= np.sqrt(n)
    els[1:] /= np.sqrt(2)
    return HermitianBasis(n, els)


@dataclass(frozen=True, eq=False)
class GptState:
    coords: np.ndarray
    system: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "coords", _frozen_real(self.coords))

    @property
    def dim_real(self):
        return self.coords.size


@dataclass(frozen=True, eq=False)
class GptEffect:
    coords: np.ndarray
    system: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "coords", _frozen_real(self.coords))

    @property
    def dim_real(self):
        return self.coords.size


@dataclass(frozen=True, eq=False)
class GptMeasurement:
    """Effect vectors of one measurement, one row per outcome."""

    label: str
    effects: np.ndarray
    outcome_labels: tuple = ()
    system: str = "custom"

    def __post_init__(self):
        e = np.array(self.effects, dtype=float, copy=True)
        if e.ndim != 2 or e.shape[0] < 1:
            raise DimensionMismatch(f"effects must be a non-empty 2-D array, got shape {e.shape}")
        e.setflags(write=False)
        object.__setattr__(self, "effects", e)
        labels = tuple(str(o) for o in self.outcome_labels) or tuple(str(i) for i in range(e.shape[0]))
        if len(labels) != e.shape[0]:
            raise LengthMismatch(f"{len(labels)} outcome labels for {e.shape[0]} effects")
        if len(set(labels)) != len(labels):
            raise DuplicateLabel(f"outcome labels of {self.label!r} are not unique")
        object.__setattr__(self, "outcome_labels", labels)

    @property
    def dim_real(self):
        return self.effects.shape[1]

    def __len__(self):
        return self.effects.shape[0]

    def effect(self, i):
        return GptEffect(self.effects[i], self.system)


def embed_state(rho, basis=None):
    """Real coordinates ``s_a = tr(B_a rho)``."""
    basis = basis or standard_basis(rho.dim)
    if basis.dim != rho.dim:
        raise DimensionMismatch(f"state of dimension {rho.dim} with basis of dimension {basis.dim}")
    m = rho.matrix[None]
    imag = float(np.max(np.abs(basis.imaginary_components(m))))
    if imag > tol.EMBED_IMAG_TOL:
        raise ValidationError(f"embedding has imaginary part {imag:.3e}", imag)
    s = basis.components(m)[0]
    dev = abs(s[0] - 1 / np.sqrt(basis.dim))
    if dev > tol.TRACE_TOL:
        raise ValidationError(f"normalization coordinate off by {dev:.3e}", dev)
    return GptState(s, f"quantum:{basis.dim}")


def embed_states(matrices, basis):
    """Vectorized embedding of a stack of density matrices, no validation."""
    return basis.components(matrices)


def unembed_state(s, basis=None):
    n = int(round(np.sqrt(s.dim_real)))
    basis = basis or standard_basis(n)
    if basis.real_dim != s.dim_real:
        raise DimensionMismatch(f"vector of length {s.dim_real} with basis of dimension {basis.dim}")
    return DensityMatrix(basis.matrix(s.coords))


def embed_effect(effect, basis=None):
    """Real coordinates ``o_a = tr(B_a E)``."""
    basis = basis or standard_basis(effect.dim)
    if basis.dim != effect.dim:
        raise DimensionMismatch(f"effect of dimension {effect.dim} with basis of dimension {basis.dim}")
    m = effect.matrix[None]
    imag = float(np.max(np.abs(basis.imaginary_components(m))))
    if imag > tol.EMBED_IMAG_TOL:
        raise ValidationError(f"embedding has imaginary part {imag:.3e}", imag)
    return GptEffect(basis.components(m)[0], f"quantum:{basis.dim}")


def unembed_effect(o, basis=None):
    n = int(round(np.sqrt(o.dim_real)))
    basis = basis or standard_basis(n)
    if basis.real_dim != o.dim_real:
        raise DimensionMismatch(f"vector of length {o.dim_real} with basis of dimension {basis.dim}")
    return Effect(basis.matrix(o.coords))


def embed_povm(povm, basis=None):
    basis = basis or standard_basis(povm.dim)
    rows = [embed_effect(e, basis).coords for e in povm.effects]
    return GptMeasurement(povm.label, np.stack(rows), povm.outcome_labels, f"quantum:{basis.dim}")


def vector_probability(o, s):
    """``o . s`` with the same clamping policy as the trace formula."""
    if o.dim_real != s.dim_real:
        raise DimensionMismatch(f"effect of length {o.dim_real} with state of length {s.dim_real}")
    return clamp_probability(float(np.dot(o.coords, s.coords)))


def measurement_distribution(m, s):
    if m.dim_real != s.dim_real:
        raise DimensionMismatch(f"measurement of length {m.dim_real} with state of length {s.dim_real}")
    return clamp_probability(m.effects @ s.coords)


@dataclass(frozen=True, eq=False)
class GptSystem:
    """A system given by a finite generating set of states and its measurements.

    ``kind`` is ``"classical"``, ``"quantum"`` or ``"custom"``; ``dim`` is the
    number of classical outcomes ``k`` or the Hilbert dimension ``n`` (for
    custom systems, the vector length).
    """

    kind: str
    dim: int
    extremal_states: tuple = ()
    measurements: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "extremal_states", tuple(self.extremal_states))
        object.__setattr__(self, "measurements", dict(self.measurements))
        d = self.real_dim
        for s in self.extremal_states:
            if s.dim_real != d:
                raise DimensionMismatch(f"extremal state of length {s.dim_real} in a system of length {d}")
        for label, m in self.measurements.items():
            if m.dim_real != d:
                raise DimensionMismatch(f"measurement {label!r} of length {m.dim_real} in a system of length {d}")
            for idx, s in enumerate(self.extremal_states):
                p = m.effects @ s.coords
                worst = max(float(-p.min()), abs(float(p.sum()) - 1.0))
                if worst > tol.NORMALIZATION_TOL:
                    raise InvalidSystem(
                        f"measurement {label!r} on extremal state {idx} gives an invalid "
                        f"distribution (deviation {worst:.3e})",
                        worst,
                    )

    @property
    def name(self):
        return f"{self.kind}:{self.dim}"

    @property
    def real_dim(self):
        return self.dim * self.dim if self.kind == "quantum" else self.dim


def classical_system(k):
    """Simplex with ``k`` vertices and its fine-grained measurement.

    States are probability vectors; the fine measurement's effects are the
    coordinate projections, and the unit effect is the all-ones vector.
    """
    if k < 2:
        raise ValueError("a classical system needs at least two outcomes")
    name = f"classical:{k}"
    eye = np.eye(k)
    states = [GptState(row, name) for row in eye]
    fine = GptMeasurement("fine", eye, tuple(str(i) for i in range(k)), name)
    return GptSystem("classical", k, states, {"fine": fine})


def quantum_system(n, povms=()):
    """Quantum system of dimension ``n``; computational-basis projectors serve as sample extremal states."""
    basis = standard_basis(n)
    states = []
    for i in range(n):
        p = np.zeros((n, n))
        p[i, i] = 1
        states.append(embed_state(DensityMatrix(p), basis))
    meas = {}
    for p in povms:
        meas[p.label] = embed_povm(p, basis)
    return GptSystem("quantum", n, states, meas)


def custom_system(extremal_states, measurements):
    """System from explicit state vectors and ``{label: effect rows}``."""
    states = [s if isinstance(s, GptState) else GptState(s, "custom") for s in extremal_states]
    if not states:
        raise InvalidSystem("a custom system needs at least one extremal state")
    d = states[0].dim_real
    meas = {}
    for label, m in measurements.items():
        meas[label] = m if isinstance(m, GptMeasurement) else GptMeasurement(label, m, (), "custom")
    return GptSystem("custom", d, states, meas)


class Distinguishability:
    """Outcome of :func:`perfectly_distinguishable`; truthy when distinguishable."""

    __slots__ = ("distinguishable", "witness", "overlap", "support_overlap")

    def __init__(self, distinguishable, witness, overlap, support_overlap):
        self.distinguishable = distinguishable
        self.witness = witness
        self.overlap = overlap
        self.support_overlap = support_overlap

    def __bool__(self):
        return self.distinguishable

    def __repr__(self):
        return f"Distinguishability({self.distinguishable}, overlap={self.overlap:.3e})"


def _support_projector(rho):
    w, v = np.linalg.eigh(rho.matrix)
    cols = v[:, w > tol.SUPPORT_EIGENVALUE_TOL]
    return cols @ cols.conj().T


def perfectly_distinguishable(rho1, rho2):
    """Whether one measurement tells ``rho1`` from ``rho2`` with certainty.

    True iff the supports are orthogonal. The witness is the two-outcome
    projective measurement onto the support of ``rho1`` and its complement.
    """
    if rho1.dim != rho2.dim:
        raise DimensionMismatch(f"dimension {rho1.dim} does not match {rho2.dim}")
    overlap = float(np.sum(rho1.matrix * rho2.matrix.T).real)
    p1 = _support_projector(rho1)
    p2 = _support_projector(rho2)
    support = float(np.linalg.norm(p1 @ p2, 2))
    if overlap > tol.DISTINGUISH_OVERLAP_TOL or support > tol.DISTINGUISH_SUPPORT_TOL:
        return Distinguishability(False, None, overlap, support)
    n = rho1.dim
    witness = Povm([p1, np.eye(n) - p1], label="witness", outcome_labels=("rho1", "rho2"))
    for rho, expected in ((rho1, (1.0, 0.0)), (rho2, (0.0, 1.0))):
        p = np.einsum("kab,ba->k", witness.matrices(), rho.matrix).real
        if np.max(np.abs(p - expected)) > tol.WITNESS_TOL:
            return Distinguishability(False, None, overlap, support)
    return Distinguishability(True, witness, overlap, support)


def distinguishing_measurement(system, s1, s2):
    """Label of a measurement of ``system`` whose every outcome rules out ``s1`` or ``s2``.

    With such a measurement the posterior probability of either preparation
    given any observed outcome is 0 or 1. Returns ``None`` if the system has
    no such measurement.
    """
    for label, m in system.measurements.items():
        p1 = m.effects @ s1.coords
        p2 = m.effects @ s2.coords
        if np.all(np.minimum(p1, p2) <= tol.WITNESS_TOL):
            return label
    return None


def apply_linear_map(t, rho, basis=None):
    """Apply a real linear map ``t`` to the state vector of ``rho``.

    Unlike Kraus transformations, a raw linear map may leave the state
    space; the result is validated and DensityMatrix errors propagate.
    """
    basis = basis or standard_basis(rho.dim)
    t = np.asarray(t, dtype=float)
    if t.shape != (basis.real_dim, basis.real_dim):
        raise DimensionMismatch(f"linear map of shape {t.shape} for vectors of length {basis.real_dim}")
    s = embed_state(rho, basis).coords
    m = basis.matrix(t @ s)
    return DensityMatrix(m)


def system_to_json(system):
    return {
        "kind": system.kind,
        "dim": system.dim,
        "extremal_states": [s.coords.tolist() for s in system.extremal_states],
        "measurements": [
            {"label": label, "outcome_labels": list(m.outcome_labels), "effects": m.effects.tolist()}
            for label, m in system.measurements.items()
        ],
    }


def system_from_json(obj):
    kind = obj["kind"]
    dim = int(obj.get("dim", 0))
    name = f"{kind}:{dim}" if kind != "custom" else "custom"
    states = [GptState(s, name) for s in obj.get("extremal_states", [])]
    if kind == "custom" and not dim and states:
        dim = states[0].dim_real
    meas = {}
    for m in obj.get("measurements", []):
        meas[m["label"]] = GptMeasurement(m["label"], m["effects"], tuple(m.get("outcome_labels", ())), name)
    if kind not in ("classical", "quantum", "custom"):
        raise InvalidSystem(f"unknown system kind {kind!r}")
    return GptSystem(kind, dim, states, meas)
