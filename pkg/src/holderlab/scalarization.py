"""Hilbert-Schmidt scalarization of operator differences and finite
scalar measurements.

The scalarization compresses the whitened operator difference through
diagonal probe weights 2^-j in the Gram-orthonormalized basis and takes
the squared Hilbert-Schmidt norm: a single scalar that vanishes exactly
when the truncated difference does. Finite measurements sample raw
matrix entries; a greedy selector builds a small entry set whose
Euclidean distance stays uniformly comparable to the operator distance
over a sample of pairs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BasisMismatch, DegenerateSample, IndexOutOfRange
from .operators import check_compatible, operator_distance, whitened_difference


@dataclass(frozen=True)
class ProbeWeights:
    k: int
    weights: np.ndarray

    def square_sum(self):
        return float(np.sum(self.weights**2))


def probe_weights(k):
    """Diagonal probe weights (2^-1, ..., 2^-k); their squares sum to
    (1 - 4^-k)/3."""
    if k < 1:
        raise ValueError("truncation order must be at least 1")
    return ProbeWeights(k, 0.5 ** np.arange(1, k + 1))


def phi(a, b, w):
    """Squared Hilbert-Schmidt norm of the weighted, whitened operator
    difference truncated to the first w.k orthonormal directions."""
    check_compatible(a, b)
    if w.k > a.dim:
        raise BasisMismatch(
            "truncation order %d exceeds basis dimension %d" % (w.k, a.dim)
        )
    d = whitened_difference(a, b)[: w.k, : w.k]
    wd = (w.weights[:, None] * w.weights[None, :]) * d
    return float(np.sum(wd * wd))


def matrix_element(a, i, j):
    """Single scalar measurement: the (i, j) duality pairing of the
    operator against basis elements i and j."""
    if not (0 <= i < a.dim and 0 <= j < a.dim):
        raise IndexOutOfRange("indices (%d, %d) outside dimension %d" % (i, j, a.dim))
    return float(a.matrix[i, j])


@dataclass(frozen=True)
class MeasurementSet:
    """Index pairs into the boundary basis, duplicate-free."""

    pairs: tuple

    def __post_init__(self):
        if len(set(self.pairs)) != len(self.pairs):
            raise ValueError("measurement set contains duplicate pairs")

    def __len__(self):
        return len(self.pairs)


@dataclass(frozen=True)
class FiniteMap:
    """A measurement set bound to the basis (dimension) it samples."""

    mset: MeasurementSet
    dim: int

    def __post_init__(self):
        for i, j in self.mset.pairs:
            if not (0 <= i < self.dim and 0 <= j < self.dim):
                raise IndexOutOfRange(
                    "pair (%d, %d) outside dimension %d" % (i, j, self.dim)
                )

    def evaluate(self, a):
        if a.dim != self.dim:
            raise BasisMismatch("operator dimension differs from measurement map")
        return np.array([a.matrix[i, j] for i, j in self.mset.pairs])


def finite_distance(fm, a, b):
    """Euclidean distance of the finite measurement vectors."""
    check_compatible(a, b)
    return float(np.linalg.norm(fm.evaluate(a) - fm.evaluate(b)))


@dataclass
class SelectionResult:
    mset: MeasurementSet
    achieved_ratio: float
    reached: bool  # False flags that max_size stopped the search


def all_candidate_pairs(dim):
    """Upper-triangle index pairs; symmetry makes the lower triangle
    redundant."""
    return [(i, j) for i in range(dim) for j in range(i, dim)]


def greedy_select(samples, candidates, target_ratio, max_size):
    """Grow a measurement set greedily until the worst-case ratio
    finite_distance/operator_distance over the samples reaches
    target_ratio.

    Each step adds the candidate maximizing the minimum ratio, ties
    broken by lowest candidate index. If max_size is hit first the set
    is still returned with reached=False.
    """
    if not samples:
        raise ValueError("need at least one sample pair")
    if not (0.0 < target_ratio <= 1.0):
        raise ValueError("target_ratio must lie in (0, 1]")
    dists = []
    diffs = []
    for a, b in samples:
        dist = operator_distance(a, b)
        if dist == 0.0:
            raise DegenerateSample("sample pair with zero operator distance")
        dists.append(dist)
        diffs.append(a.matrix - b.matrix)
    dists = np.array(dists)
    if not candidates:
        return SelectionResult(MeasurementSet(()), 0.0, False)
    # squared entry differences per sample and candidate
    cand = np.array(
        [[d[i, j] ** 2 for (i, j) in candidates] for d in diffs]
    )
    n_cand = len(candidates)
    ssq = np.zeros(len(samples))
    chosen = []
    taken = np.zeros(n_cand, dtype=bool)
    ratio = 0.0
    while len(chosen) < min(max_size, n_cand):
        scores = np.min(np.sqrt(ssq[:, None] + cand) / dists[:, None], axis=0)
        scores[taken] = -np.inf
        pick = int(np.argmax(scores))
        taken[pick] = True
        chosen.append(candidates[pick])
        ssq += cand[:, pick]
        ratio = float(np.min(np.sqrt(ssq) / dists))
        if ratio >= target_ratio:
            return SelectionResult(MeasurementSet(tuple(chosen)), ratio, True)
    return SelectionResult(MeasurementSet(tuple(chosen)), ratio, False)
