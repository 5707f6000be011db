"""Spectral transformations of the design matrix.

A transform is kept in factored form ``Q = I - U diag(1 - shrink) U^T`` with
``U`` the thin left singular vectors of X. It is never materialized as an
n x n matrix except through :meth:`SpectralTransform.dense`, which exists for
testing.
"""

from dataclasses import dataclass, field
from math import ceil, floor

import numpy as np

from specdeconf.errors import InvalidQ, InvalidRho, RankDeficient, ShapeMismatch, ZeroMatrix

# singular values below REL_ZERO * d_1 count as zero
REL_ZERO = 1e-12
ABS_ZERO = 1e-14


@dataclass(frozen=True)
class SVDResult:
    U: np.ndarray
    d: np.ndarray
    Vt: np.ndarray = field(repr=False)

    @property
    def r(self):
        return self.d.shape[0]


def thin_svd(X):
    """Thin SVD with r = min(n, p); deterministic LAPACK gesdd path."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeMismatch(f"expected a 2-d matrix, got shape {X.shape}")
    U, d, Vt = np.linalg.svd(X, full_matrices=False)
    return SVDResult(U=U, d=d, Vt=Vt)


@dataclass(frozen=True)
class SpectralTransform:
    """Symmetric shrinkage operator ``Q`` in factored form.

    Attributes
    ----------
    kind : str
        ``"trim"``, ``"pca"`` or ``"identity"``.
    U : ndarray, shape (n, r)
        Orthonormal directions that get shrunk.
    shrink : ndarray, shape (r,)
        Per-direction multipliers in [0, 1]; directions orthogonal to ``U``
        are left untouched.
    n : int
    param : float or int or None
        ``rho`` for trim, ``q`` for pca.
    """

    kind: str
    U: np.ndarray = field(repr=False)
    shrink: np.ndarray
    n: int
    param: object = None

    def __post_init__(self):
        self.U.setflags(write=False)
        self.shrink.setflags(write=False)

    def apply(self, M):
        return apply(self, M)

    def apply_squared(self, M):
        """``Q @ Q @ M`` via the factored form (``Q^2`` shares ``U``)."""
        M = _check_rows(self, M)
        if self.U.shape[1] == 0:
            return M.copy()
        w = 1.0 - self.shrink**2
        if M.ndim == 1:
            return M - self.U @ (w * (self.U.T @ M))
        return M - self.U @ (w[:, None] * (self.U.T @ M))

    def dense(self):
        """Materialize Q as an n x n matrix (testing only)."""
        return apply(self, np.eye(self.n))

    @property
    def is_identity(self):
        return self.U.shape[1] == 0 or bool(np.all(self.shrink == 1.0))


def _check_rows(Q, M):
    M = np.asarray(M, dtype=float)
    if M.ndim not in (1, 2) or M.shape[0] != Q.n:
        raise ShapeMismatch(f"transform has n={Q.n} rows, argument has shape {M.shape}")
    return M


def apply(Q, M):
    """Return ``Q @ M`` for a vector or matrix ``M`` in O(n r m)."""
    M = _check_rows(Q, M)
    if Q.U.shape[1] == 0:
        return M.copy()
    w = 1.0 - Q.shrink
    if M.ndim == 1:
        return M - Q.U @ (w * (Q.U.T @ M))
    return M - Q.U @ (w[:, None] * (Q.U.T @ M))


def identity_transform(n):
    return SpectralTransform("identity", np.zeros((n, 0)), np.zeros(0), n)


def _svd_of(X, svd):
    if svd is None:
        svd = thin_svd(X)
    return svd


def trim_transform(X, rho=0.5, svd=None):
    """Shrink every singular value above the ``floor(rho * r)``-th one down to it.

    Parameters
    ----------
    X : ndarray, shape (n, p)
    rho : float in (0, 1)
        0.5 trims to the median singular value.
    svd : SVDResult, optional
        Precomputed ``thin_svd(X)``.
    """
    if not (0.0 < rho < 1.0):
        raise InvalidRho(f"rho must lie in (0, 1), got {rho}")
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 1:
        raise ShapeMismatch(f"trim transform needs n >= 2 and p >= 1, got shape {X.shape}")
    svd = _svd_of(X, svd)
    d = svd.d
    if d.size == 0 or d[0] <= ABS_ZERO:
        raise ZeroMatrix("all singular values of X are zero")
    k = floor(rho * svd.r)
    if k < 1:
        raise InvalidRho(f"floor(rho * r) = floor({rho} * {svd.r}) is 0")
    thresh = d[k - 1]
    nonzero = d > REL_ZERO * d[0]
    shrink = np.ones_like(d)
    shrink[nonzero] = np.minimum(thresh / d[nonzero], 1.0)
    return SpectralTransform("trim", svd.U, shrink, X.shape[0], rho)


def pca_transform(X, q, svd=None):
    """Projector removing the top ``q`` left singular directions of X."""
    X = np.asarray(X, dtype=float)
    svd = _svd_of(X, svd)
    if not (0 <= q < svd.r):
        raise InvalidQ(f"q must satisfy 0 <= q < r = {svd.r}, got {q}")
    U = svd.U[:, :q]
    return SpectralTransform("pca", np.ascontiguousarray(U), np.zeros(q), X.shape[0], int(q))


def eigenvalue_ratio_from_spectrum(d):
    """Eigenvalue-ratio estimate from nonincreasing singular values ``d``.

    Returns the 1-based ``l`` in ``1..ceil(r/2)`` maximizing
    ``d_l^2 / d_{l+1}^2``. A numerically zero ``d_{l+1}`` makes the ratio
    infinite; ties go to the smallest ``l``.
    """
    d = np.asarray(d, dtype=float)
    r = d.shape[0]
    if r < 2:
        raise RankDeficient(f"eigenvalue ratio needs r >= 2, got r = {r}")
    if d[0] <= ABS_ZERO:
        raise ZeroMatrix("all singular values are zero")
    eps = REL_ZERO * d[0]
    best_l, best = 1, -np.inf
    for l in range(1, ceil(r / 2) + 1):
        num, den = d[l - 1], d[l]
        if den < eps:
            ratio = np.inf if num >= eps else -np.inf
        else:
            ratio = (num / den) ** 2
        if ratio > best:
            best_l, best = l, ratio
            if ratio == np.inf:
                break
    return best_l


def eigenvalue_ratio_q(X, svd=None):
    """Estimated confounder dimension ``q_hat`` of X (eigenvalue ratio rule)."""
    svd = _svd_of(np.asarray(X, dtype=float), svd)
    return eigenvalue_ratio_from_spectrum(svd.d)
