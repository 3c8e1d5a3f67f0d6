"""Uncertain preparations and measurements: mixtures and dithers.

Everything here acts on real effect/state vectors, so the same algebra serves
quantum, classical and custom systems.
"""

from dataclasses import dataclass

import numpy as np

from . import tolerances as tol
from .errors import (
    BadWeights,
    DimensionMismatch,
    LengthMismatch,
    NotStochastic,
    ShapeMismatch,
    SystemMismatch,
)
from .gpt import GptMeasurement, GptState

__all__ = [
    "MixtureWeights",
    "DitherMatrix",
    "Mix",
    "Dither",
    "mix_preparations",
    "mix_measurements",
    "dither_measurement",
    "coarsening",
    "compose",
]


class MixtureWeights:
    """Probability vector of mixture weights. Never renormalized silently."""

    __slots__ = ("weights",)

    def __init__(self, weights):
        q = np.array(weights, dtype=float, copy=True).ravel()
        if q.size < 1:
            raise BadWeights("empty weight vector")
        if not np.all(np.isfinite(q)) or q.min() < 0:
            raise BadWeights(f"weights must be non-negative, got {q.tolist()}", float(-q.min()))
        dev = abs(float(q.sum()) - 1.0)
        if dev > tol.WEIGHTS_TOL:
            raise BadWeights(f"weights sum to {q.sum()!r}, deviation {dev:.3e}", dev)
        q.setflags(write=False)
        object.__setattr__(self, "weights", q)

    def __setattr__(self, name, value):
        raise AttributeError("MixtureWeights is immutable")

    def __len__(self):
        return self.weights.size


class DitherMatrix:
    """Column-stochastic matrix ``Q[j, i] = P(new outcome j | old outcome i)``."""

    __slots__ = ("entries",)

    def __init__(self, entries):
        q = np.array(entries, dtype=float, copy=True)
        if q.ndim != 2 or q.size == 0:
            raise ShapeMismatch(f"dither matrix must be a non-empty 2-D array, got shape {q.shape}")
        if not np.all(np.isfinite(q)) or q.min() < 0:
            raise NotStochastic("dither matrix has negative entries", float(-q.min()))
        dev = float(np.max(np.abs(q.sum(axis=0) - 1.0)))
        if dev > tol.STOCHASTIC_TOL:
            raise NotStochastic(f"dither matrix columns sum to 1 only within {dev:.3e}", dev)
        q.setflags(write=False)
        object.__setattr__(self, "entries", q)

    def __setattr__(self, name, value):
        raise AttributeError("DitherMatrix is immutable")

    @property
    def rows(self):
        return self.entries.shape[0]

    @property
    def cols(self):
        return self.entries.shape[1]

    def __matmul__(self, other):
        return DitherMatrix(self.entries @ other.entries)


def _weights(q):
    return q if isinstance(q, MixtureWeights) else MixtureWeights(q)


def mix_preparations(states, q):
    """Convex combination ``sum_k q_k s_k`` of state vectors."""
    q = _weights(q)
    states = list(states)
    if len(states) != len(q):
        raise LengthMismatch(f"{len(states)} states for {len(q)} weights")
    d = states[0].dim_real
    if any(s.dim_real != d for s in states):
        raise DimensionMismatch("states have different lengths")
    if len({s.system for s in states}) > 1:
        raise SystemMismatch("states belong to different systems")
    coords = np.zeros(d)
    for w, s in zip(q.weights, states):
        coords += w * s.coords
    return GptState(coords, states[0].system)


def mix_measurements(m1, m2, q, label=None):
    """Measurement performed as ``m1`` with probability ``q[0]``, else ``m2``.

    The outcome set is the disjoint union of both outcome sets, labelled
    ``"<m1.label>/<outcome>"`` and ``"<m2.label>/<outcome>"`` (with ``#1`` and
    ``#2`` appended to the labels when a measurement is mixed with itself).
    """
    q = _weights(q)
    if len(q) != 2:
        raise BadWeights(f"mixing two measurements needs two weights, got {len(q)}")
    if m1.system != m2.system or m1.dim_real != m2.dim_real:
        raise SystemMismatch(f"cannot mix {m1.system} measurement with {m2.system} measurement")
    q1, q2 = q.weights
    effects = np.vstack([q1 * m1.effects, q2 * m2.effects])
    p1, p2 = (m1.label, m2.label) if m1.label != m2.label else (f"{m1.label}#1", f"{m2.label}#2")
    labels = tuple(f"{p1}/{o}" for o in m1.outcome_labels) + tuple(f"{p2}/{o}" for o in m2.outcome_labels)
    return GptMeasurement(label or f"mix({m1.label},{m2.label})", effects, labels, m1.system)


def dither_measurement(m, Q, label=None, outcome_labels=None):
    """Post-process outcomes: new effects ``o''_j = sum_i Q[j, i] o_i``."""
    Q = Q if isinstance(Q, DitherMatrix) else DitherMatrix(Q)
    if Q.cols != len(m):
        raise ShapeMismatch(f"dither matrix has {Q.cols} columns for {len(m)} outcomes")
    effects = Q.entries @ m.effects
    if outcome_labels is None:
        outcome_labels = tuple(str(j) for j in range(Q.rows))
    return GptMeasurement(label or f"dither({m.label})", effects, outcome_labels, m.system)


def coarsening(groups, n_outcomes):
    """0/1 dither matrix merging each group of old outcome indices into one new outcome."""
    Q = np.zeros((len(groups), n_outcomes))
    for j, group in enumerate(groups):
        for i in group:
            Q[j, i] = 1.0
    return DitherMatrix(Q)


@dataclass(frozen=True)
class Mix:
    """Step: mix the running measurement with ``other`` (running one gets ``weights[0]``)."""

    other: GptMeasurement
    weights: tuple


@dataclass(frozen=True)
class Dither:
    """Step: dither the running measurement with ``matrix``."""

    matrix: object


def compose(m, steps=()):
    """Fold a chain of :class:`Mix` and :class:`Dither` steps over ``m``.

    An empty chain returns ``m`` itself.
    """
    out = m
    for step in steps:
        if isinstance(step, Mix):
            out = mix_measurements(out, step.other, step.weights)
        elif isinstance(step, Dither):
            out = dither_measurement(out, step.matrix)
        else:
            raise TypeError(f"not a composition step: {step!r}")
    return out
