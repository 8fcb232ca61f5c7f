"""Dense/sparse symmetric linear algebra and 1D adaptive quadrature.

All other modules funnel their linear solves and eigenvalue evaluations
through this one. Matrices are 64-bit floats throughout. Symmetric
eigenproblems go through LAPACK's symmetric solver; problem sizes stay
in the hundreds, so dense factorizations are used even for sparse
inputs.
"""

import math

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import DimensionMismatch, NotPositiveDefinite, ToleranceNotReached


def symmetrize(a):
    """Return 0.5*(a + a.T) as a C-contiguous float array.

    The result satisfies entries[i][j] == entries[j][i] exactly, not
    just to tolerance.
    """
    a = np.asarray(a, dtype=float)
    s = 0.5 * (a + a.T)
    # 0.5*(x+y) == 0.5*(y+x) in IEEE, so s is exactly symmetric
    return np.ascontiguousarray(s)


def spectral_norm(m):
    """Largest absolute eigenvalue of a symmetric matrix."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    w = np.linalg.eigvalsh(symmetrize(m))
    return float(np.max(np.abs(w)))


def eig_min(m):
    """Smallest eigenvalue of a symmetric matrix."""
    m = np.asarray(m, dtype=float)
    w = np.linalg.eigvalsh(symmetrize(m))
    return float(w[0])


def _as_dense(m):
    if scipy.sparse.issparse(m):
        return m.toarray()
    return np.asarray(m, dtype=float)


class SpdFactor:
    """Cholesky factor of an SPD matrix, kept with the original matrix
    so solves can do one iterative-refinement pass."""

    def __init__(self, mat):
        dense = _as_dense(mat)
        n = dense.shape[0]
        if dense.shape != (n, n):
            raise DimensionMismatch("matrix must be square")
        if not np.allclose(dense, dense.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(dense).max())):
            raise NotPositiveDefinite("matrix is not symmetric")
        try:
            self._cho = scipy.linalg.cho_factor(dense, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from exc
        except ValueError as exc:
            raise NotPositiveDefinite(str(exc)) from exc
        self.n = n
        self._mat = dense

    @property
    def lower(self):
        """Lower-triangular factor L with L @ L.T equal to the input."""
        return np.tril(self._cho[0])


def factor_spd(m):
    """Cholesky-factor a symmetric positive definite matrix.

    Accepts a dense array or any scipy.sparse matrix. Raises
    NotPositiveDefinite on a non-positive pivot, which for assembled
    systems signals a coefficient outside the ellipticity cone or a
    broken constraint row.
    """
    return SpdFactor(m)


def solve(f, b):
    """Solve f's matrix against b (vector or column block).

    One refinement pass keeps the relative residual at or below 1e-12
    even for moderately conditioned systems.
    """
    b = np.asarray(b, dtype=float)
    if b.shape[0] != f.n:
        raise DimensionMismatch(
            "right-hand side has %d rows, factor is %d" % (b.shape[0], f.n)
        )
    x = scipy.linalg.cho_solve(f._cho, b, check_finite=False)
    scale = np.linalg.norm(b)
    if scale == 0.0:
        return np.zeros_like(b)
    for _ in range(4):
        r = b - f._mat @ x
        if np.linalg.norm(r) <= 1e-13 * scale:
            break
        x = x + scipy.linalg.cho_solve(f._cho, r, check_finite=False)
    return x


class ConstrainedFactor:
    """Factorization of the bordered system [[K, c], [c^T, 0]].

    The augmented matrix is symmetric indefinite (exactly one negative
    eigenvalue), so plain Cholesky cannot apply. Instead K is shifted
    by a rank-one term sigma*c*c^T that is positive on the constraint
    violation direction: for K positive semidefinite with kernel not
    orthogonal to c, the shifted matrix is SPD and the bordered solve
    reduces to two SPD solves. A coefficient outside the ellipticity
    cone (K indefinite) or a zero constraint row both leave the shifted
    matrix non-SPD, surfacing as NotPositiveDefinite.
    """

    def __init__(self, K, c):
        K = _as_dense(K)
        c = np.asarray(c, dtype=float).ravel()
        n = c.shape[0]
        if K.shape != (n, n):
            raise DimensionMismatch("K and constraint row sizes differ")
        cc = float(c @ c)
        if cc == 0.0:
            raise NotPositiveDefinite("constraint row is zero")
        sigma = float(np.trace(K)) / cc
        if sigma <= 0.0:
            sigma = 1.0
        self._K = K
        self._c = c
        self._sigma = sigma
        self._f = factor_spd(symmetrize(K + sigma * np.outer(c, c)))
        self._z = solve(self._f, c)
        self._cz = float(c @ self._z)
        if self._cz <= 0.0:
            raise NotPositiveDefinite("constraint direction lost in shift")
        self.n = n

    def _solve_once(self, b, beta):
        y = solve(self._f, b)
        nu = (beta - self._c @ y) / self._cz
        u = y + np.outer(self._z, nu) if b.ndim == 2 else y + nu * self._z
        lam = self._sigma * beta - nu
        return u, lam

    def solve(self, b, beta=0.0):
        """Return (u, lam) with K u + lam c = b and c.u = beta.

        b may be a vector or an (n, k) block; beta broadcasts.
        """
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise DimensionMismatch(
                "right-hand side has %d rows, system is %d" % (b.shape[0], self.n)
            )
        beta = np.asarray(beta, dtype=float)
        u, lam = self._solve_once(b, beta)
        scale = max(np.linalg.norm(b), float(np.max(np.abs(beta))) if beta.size else 0.0)
        if scale == 0.0:
            scale = 1.0
        # refine against the unshifted bordered system until the
        # augmented residual is at solver noise
        for _ in range(4):
            r = b - self._K @ u - (np.outer(self._c, lam) if b.ndim == 2 else lam * self._c)
            rho = beta - self._c @ u
            if max(np.linalg.norm(r), float(np.max(np.abs(rho)))) <= 1e-13 * scale:
                break
            du, dlam = self._solve_once(r, rho)
            u = u + du
            lam = lam + dlam
        return u, lam


def factor_constrained(K, c):
    """Factor the saddle system that pins a single linear constraint."""
    return ConstrainedFactor(K, c)


def adaptive_quadrature(f, a, b, tol, max_depth=50):
    """Integrate f over [a, b] to absolute tolerance tol.

    Adaptive Simpson with Richardson correction. Raises
    ToleranceNotReached if an interval still fails its local tolerance
    at recursion depth max_depth.
    """
    if a > b:
        raise ValueError("integration bounds out of order")
    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_step(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    err = left + right - whole
    if abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    if depth <= 0:
        raise ToleranceNotReached(
            "interval [%g, %g] still above tolerance at depth cap" % (a, b)
        )
    half = 0.5 * tol
    return _simpson_step(f, a, m, fa, flm, fm, left, half, depth - 1) + _simpson_step(
        f, m, b, fm, frm, fb, right, half, depth - 1
    )


def flat_integrand(s):
    """exp(-1/s^2) extended by zero at s = 0."""
    if s == 0.0:
        return 0.0
    return math.exp(-1.0 / (s * s))
