"""Density matrices, effects, POVMs and Kraus transformations.

All carriers hold read-only ``complex128`` arrays and validate eagerly in
their constructors. The probability of outcome ``i`` for preparation ``rho``
is ``tr(E_i rho)``.
"""

import re
from functools import reduce

import numpy as np

from . import tolerances as tol
from .errors import (
    DimensionMismatch,
    DuplicateLabel,
    EffectOutOfRange,
    LengthMismatch,
    NotHermitian,
    NotNormalized,
    NotOrthonormal,
    NotPositive,
    NotTracePreserving,
    PovmNotComplete,
    ProbabilityOutOfRange,
    TraceNotOne,
    ValidationError,
)

__all__ = [
    "as_matrix",
    "DensityMatrix",
    "Effect",
    "Povm",
    "PureState",
    "Transformation",
    "validate_density",
    "trace_probability",
    "outcome_distribution",
    "born_probability",
    "expectation_value",
    "apply_transformation",
    "compose_transformations",
    "projective_measurement",
    "clamp_probability",
    "pauli",
    "gellmann",
    "named_matrix",
    "qubit_ket",
    "matrix_to_json",
    "matrix_from_json",
]


def _frozen(array, dtype=np.complex128):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def as_matrix(matrix):
    """Coerce to a square complex array; raise DimensionMismatch otherwise."""
    m = np.asarray(matrix, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    return m


def _hermitian_violation(m):
    return float(np.max(np.abs(m - m.conj().T)))


def _check_hermitian(m, what):
    dev = _hermitian_violation(m)
    if dev > tol.HERMITIAN_TOL:
        raise NotHermitian(f"{what} is not Hermitian: max |m_ab - conj(m_ba)| = {dev:.3e}", dev)


def _eigvalsh(m):
    # Symmetrize so round-off anti-Hermitian parts cannot leak into eigvalsh.
    return np.linalg.eigvalsh((m + m.conj().T) / 2)


class DensityMatrix:
    """Unit-trace positive semidefinite Hermitian matrix."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = as_matrix(matrix)
        _check_hermitian(m, "density matrix")
        tr = np.trace(m).real
        if abs(tr - 1.0) > tol.TRACE_TOL:
            raise TraceNotOne(f"density matrix trace is {tr!r}, deviation {abs(tr - 1):.3e}", abs(tr - 1))
        lo = float(_eigvalsh(m)[0])
        if lo < -tol.POSITIVITY_TOL:
            raise NotPositive(f"density matrix has eigenvalue {lo:.3e}", -lo)
        object.__setattr__(self, "matrix", _frozen(m))

    def __setattr__(self, name, value):
        raise AttributeError("DensityMatrix is immutable")

    @property
    def dim(self):
        return self.matrix.shape[0]

    @classmethod
    def from_pure(cls, psi):
        v = psi.amplitudes if isinstance(psi, PureState) else PureState(psi).amplitudes
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, n):
        return cls(np.eye(n) / n)

    def purity(self):
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def __eq__(self, other):
        return isinstance(other, DensityMatrix) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim})"


def validate_density(matrix):
    """Validate a raw matrix as a density matrix.

    Raises NotHermitian, TraceNotOne or NotPositive, each carrying the size
    of the violation in ``.magnitude``.
    """
    if isinstance(matrix, DensityMatrix):
        return matrix
    return DensityMatrix(matrix)


class Effect:
    """Hermitian matrix with spectrum in [0, 1]."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = as_matrix(matrix)
        _check_hermitian(m, "effect")
        ev = _eigvalsh(m)
        if ev[0] < -tol.EFFECT_TOL or ev[-1] > 1 + tol.EFFECT_TOL:
            dev = max(-ev[0], ev[-1] - 1)
            raise EffectOutOfRange(
                f"effect eigenvalues [{ev[0]:.3e}, {ev[-1]:.3e}] leave [0, 1] by {dev:.3e}", dev
            )
        object.__setattr__(self, "matrix", _frozen(m))

    def __setattr__(self, name, value):
        raise AttributeError("Effect is immutable")

    @property
    def dim(self):
        return self.matrix.shape[0]

    def __repr__(self):
        return f"Effect(dim={self.dim})"


class Povm:
    """Ordered list of effects summing to the identity.

    Parameters
    ----------
    effects : sequence of Effect or array_like
    label : str
        Name of the measurement.
    outcome_labels : sequence of str, optional
        Defaults to ``"0", "1", ...``.
    """

    __slots__ = ("label", "effects", "outcome_labels")

    def __init__(self, effects, label="M", outcome_labels=None):
        effects = tuple(e if isinstance(e, Effect) else Effect(e) for e in effects)
        if not effects:
            raise ValidationError("a POVM needs at least one effect")
        n = effects[0].dim
        if any(e.dim != n for e in effects):
            raise DimensionMismatch("POVM effects have different dimensions")
        if outcome_labels is None:
            outcome_labels = [str(i) for i in range(len(effects))]
        outcome_labels = tuple(str(o) for o in outcome_labels)
        if len(outcome_labels) != len(effects):
            raise LengthMismatch(f"{len(outcome_labels)} outcome labels for {len(effects)} effects")
        if len(set(outcome_labels)) != len(outcome_labels):
            raise DuplicateLabel(f"outcome labels of POVM {label!r} are not unique")
        total = sum(e.matrix for e in effects)
        dev = float(np.max(np.abs(total - np.eye(n))))
        if dev > tol.POVM_COMPLETENESS_TOL:
            raise PovmNotComplete(f"POVM {label!r} effects sum to identity only within {dev:.3e}", dev)
        object.__setattr__(self, "label", str(label))
        object.__setattr__(self, "effects", effects)
        object.__setattr__(self, "outcome_labels", outcome_labels)

    def __setattr__(self, name, value):
        raise AttributeError("Povm is immutable")

    @property
    def dim(self):
        return self.effects[0].dim

    def __len__(self):
        return len(self.effects)

    def matrices(self):
        return np.stack([e.matrix for e in self.effects])

    def __repr__(self):
        return f"Povm({self.label!r}, outcomes={list(self.outcome_labels)})"


class PureState:
    """Unit complex vector."""

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes):
        v = np.asarray(amplitudes, dtype=np.complex128).ravel()
        if v.size < 1:
            raise DimensionMismatch("empty state vector")
        dev = abs(float(np.vdot(v, v).real) - 1.0)
        if dev > tol.PURE_NORM_TOL:
            raise NotNormalized(f"state vector squared norm deviates from 1 by {dev:.3e}", dev)
        object.__setattr__(self, "amplitudes", _frozen(v))

    def __setattr__(self, name, value):
        raise AttributeError("PureState is immutable")

    @classmethod
    def normalized(cls, amplitudes):
        v = np.asarray(amplitudes, dtype=np.complex128).ravel()
        return cls(v / np.linalg.norm(v))

    @property
    def dim(self):
        return self.amplitudes.size

    def projector(self):
        v = self.amplitudes
        return np.outer(v, v.conj())

    def __repr__(self):
        return f"PureState({self.amplitudes!r})"


class Transformation:
    """Trace-preserving completely positive map given by Kraus operators."""

    __slots__ = ("label", "kraus_ops")

    def __init__(self, kraus_ops, label="T"):
        ops = tuple(_frozen(as_matrix(k)) for k in kraus_ops)
        if not ops:
            raise ValidationError("a transformation needs at least one Kraus operator")
        n = ops[0].shape[0]
        if any(k.shape != (n, n) for k in ops):
            raise DimensionMismatch("Kraus operators have different shapes")
        total = sum(k.conj().T @ k for k in ops)
        dev = float(np.max(np.abs(total - np.eye(n))))
        if dev > tol.TRACE_PRESERVING_TOL:
            raise NotTracePreserving(f"sum K^dag K deviates from identity by {dev:.3e}", dev)
        object.__setattr__(self, "label", str(label))
        object.__setattr__(self, "kraus_ops", ops)

    def __setattr__(self, name, value):
        raise AttributeError("Transformation is immutable")

    @property
    def dim(self):
        return self.kraus_ops[0].shape[0]

    @classmethod
    def unitary(cls, u, label="U"):
        return cls([u], label=label)

    def __repr__(self):
        return f"Transformation({self.label!r}, kraus={len(self.kraus_ops)})"


def _same_dim(a, b):
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimension {a.dim} does not match {b.dim}")


def clamp_probability(p):
    """Clamp ``p`` into [0, 1] if it lies within CLAMP_TOL of the interval.

    Works elementwise on arrays. Values further outside raise
    ProbabilityOutOfRange: they signal an invalid state or effect, not
    round-off.
    """
    arr = np.asarray(p, dtype=float)
    excess = np.maximum(-arr, arr - 1.0)
    worst = float(np.max(excess)) if arr.size else 0.0
    if worst > tol.CLAMP_TOL:
        raise ProbabilityOutOfRange(f"probability leaves [0, 1] by {worst:.3e}", worst)
    out = np.clip(arr, 0.0, 1.0)
    return float(out) if np.ndim(p) == 0 else out


def trace_probability(effect, rho):
    """Return ``Re tr(E rho)``, clamped to [0, 1]."""
    _same_dim(effect, rho)
    # tr(A B) = sum_ab A_ab B_ba
    raw = np.sum(effect.matrix * rho.matrix.T).real
    return clamp_probability(raw)


def outcome_distribution(m, rho):
    """Probability vector of the outcomes of ``m`` on ``rho``."""
    _same_dim(m, rho)
    raw = np.einsum("kab,ba->k", m.matrices(), rho.matrix).real
    return clamp_probability(raw)


def born_probability(psi_i, psi_k):
    """``|<psi_i|psi_k>|^2``."""
    _same_dim(psi_i, psi_k)
    return float(abs(np.vdot(psi_i.amplitudes, psi_k.amplitudes)) ** 2)


def expectation_value(values, m, rho):
    """Mean of the outcome values ``values`` under ``m`` and ``rho``."""
    lam = np.asarray(values, dtype=float).ravel()
    if lam.size != len(m):
        raise LengthMismatch(f"{lam.size} values for {len(m)} outcomes")
    return float(lam @ outcome_distribution(m, rho))


def apply_transformation(t, rho):
    """``sum_k K_k rho K_k^dag``."""
    _same_dim(t, rho)
    out = sum(k @ rho.matrix @ k.conj().T for k in t.kraus_ops)
    # Kraus form guarantees validity; restore exact Hermiticity lost to round-off.
    return DensityMatrix((out + out.conj().T) / 2)


def compose_transformations(*ts, label=None):
    """Kraus set of applying ``ts[0]`` first, then ``ts[1]``, and so on."""
    if not ts:
        raise ValueError("nothing to compose")

    def pair(first, second):
        _same_dim(first, second)
        ops = [b @ a for b in second.kraus_ops for a in first.kraus_ops]
        return Transformation(ops, label=f"{second.label}*{first.label}")

    out = reduce(pair, ts)
    if label is not None:
        out = Transformation(out.kraus_ops, label=label)
    return out


def projective_measurement(vectors, label="M", outcome_labels=None):
    """POVM of rank-one projectors onto an orthonormal basis."""
    states = [v if isinstance(v, PureState) else PureState(v) for v in vectors]
    if not states:
        raise NotOrthonormal("empty basis")
    n = states[0].dim
    if any(s.dim != n for s in states):
        raise DimensionMismatch("basis vectors have different dimensions")
    if len(states) != n:
        raise NotOrthonormal(f"{len(states)} vectors cannot form a basis of dimension {n}")
    v = np.stack([s.amplitudes for s in states])
    dev = float(np.max(np.abs(v.conj() @ v.T - np.eye(n))))
    if dev > tol.ORTHONORMAL_TOL:
        raise NotOrthonormal(f"Gram matrix deviates from identity by {dev:.3e}", dev)
    return Povm([s.projector() for s in states], label=label, outcome_labels=outcome_labels)


# -- named matrices -----------------------------------------------------------

_PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli(axis):
    return _PAULI[axis.lower()].copy()


def gellmann(j, k, d):
    """Generalized Gell-Mann matrix, 1-based indices.

    ``j > k`` gives the symmetric matrix, ``j < k`` the antisymmetric one,
    ``j == k < d`` the diagonal one, and ``j == k == d`` the identity.
    Normalization is the conventional ``tr(G G) = 2``.
    """
    if not (1 <= j <= d and 1 <= k <= d):
        raise ValueError(f"indices ({j}, {k}) out of range for dimension {d}")
    g = np.zeros((d, d), dtype=complex)
    if j > k:
        g[j - 1, k - 1] = g[k - 1, j - 1] = 1
    elif j < k:
        g[j - 1, k - 1] = -1j
        g[k - 1, j - 1] = 1j
    elif j < d:
        diag = np.zeros(d)
        diag[:j] = 1
        diag[j] = -j
        g = np.diag(np.sqrt(2 / (j * (j + 1))) * diag).astype(complex)
    else:
        g = np.eye(d, dtype=complex)
    return g


_QUBIT_KETS = {
    "+z": [1, 0],
    "-z": [0, 1],
    "+x": [1 / np.sqrt(2), 1 / np.sqrt(2)],
    "-x": [1 / np.sqrt(2), -1 / np.sqrt(2)],
    "+y": [1 / np.sqrt(2), 1j / np.sqrt(2)],
    "-y": [1 / np.sqrt(2), -1j / np.sqrt(2)],
}


def qubit_ket(name):
    return np.array(_QUBIT_KETS[name], dtype=complex)


def named_matrix(key):
    """Build a matrix from a string key.

    Recognized keys::

        pauli:i|x|y|z
        gellmann:<d>:<j>:<k>
        proj:<d>:<k>          computational-basis projector |k><k|
        identity:<d>
        mixed:<d>             I/d
        qubit:+x|-x|+y|-y|+z|-z   projector onto a Pauli eigenvector
    """
    parts = key.split(":")
    head, args = parts[0], parts[1:]
    try:
        if head == "pauli" and len(args) == 1:
            return pauli(args[0])
        if head == "gellmann" and len(args) == 3:
            d, j, k = map(int, args)
            return gellmann(j, k, d)
        if head == "proj" and len(args) == 2:
            d, k = map(int, args)
            if not 0 <= k < d:
                raise ValueError(k)
            out = np.zeros((d, d), dtype=complex)
            out[k, k] = 1
            return out
        if head == "identity" and len(args) == 1:
            return np.eye(int(args[0]), dtype=complex)
        if head == "mixed" and len(args) == 1:
            d = int(args[0])
            return np.eye(d, dtype=complex) / d
        if head == "qubit" and len(args) == 1 and re.fullmatch(r"[+-][xyz]", args[0]):
            v = qubit_ket(args[0])
            return np.outer(v, v.conj())
    except (KeyError, ValueError):
        pass
    raise KeyError(f"unknown matrix key {key!r}")


def matrix_to_json(matrix):
    """``{"dim": n, "entries": [[re, im], ...]}`` in row-major order."""
    m = matrix.matrix if hasattr(matrix, "matrix") else as_matrix(matrix)
    return {"dim": int(m.shape[0]), "entries": [[float(z.real), float(z.imag)] for z in m.ravel()]}


def matrix_from_json(obj):
    """Inverse of :func:`matrix_to_json`; a string is read with :func:`named_matrix`."""
    if isinstance(obj, str):
        return named_matrix(obj)
    n = int(obj["dim"])
    entries = obj["entries"]
    if len(entries) != n * n:
        raise DimensionMismatch(f"{len(entries)} entries for a {n}x{n} matrix")
    arr = np.array([complex(re_, im) for re_, im in entries], dtype=complex)
    return arr.reshape(n, n)
