"""Discretized boundary data operators and the proxy operator norm.

A DataOperator is the matrix of a forward map in a fixed boundary
basis together with the Gram matrix of that basis. Distances between
operators are measured in the Gram-whitened spectral norm, the declared
stand-in for the continuum operator norm on a fixed discretization.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BasisMismatch
from .numerics import spectral_norm, symmetrize


@dataclass
class DataOperator:
    matrix: np.ndarray
    gram: np.ndarray
    kind: str  # "conductivity_nd" or "elasticity_dn"

    @property
    def dim(self):
        return self.matrix.shape[0]


def check_compatible(a, b):
    if a.kind != b.kind:
        raise BasisMismatch("operator kinds differ: %s vs %s" % (a.kind, b.kind))
    if a.matrix.shape != b.matrix.shape or not np.array_equal(a.gram, b.gram):
        raise BasisMismatch("operators do not share a basis Gram")


def gram_inv_sqrt(gram):
    """Symmetric inverse square root of an SPD Gram matrix."""
    w, q = np.linalg.eigh(symmetrize(gram))
    if w[0] <= 0:
        raise BasisMismatch("basis Gram is not positive definite")
    return symmetrize((q / np.sqrt(w)) @ q.T)


def whitened_difference(a, b):
    """G^{-1/2} (M_a - M_b) G^{-1/2}, the difference expressed in the
    Gram-orthonormalized basis."""
    check_compatible(a, b)
    w = gram_inv_sqrt(a.gram)
    return symmetrize(w @ (a.matrix - b.matrix) @ w)


def operator_distance(a, b):
    """Proxy operator norm of the difference of two data operators."""
    return spectral_norm(whitened_difference(a, b))
