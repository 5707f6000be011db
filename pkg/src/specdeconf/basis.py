"""Cubic B-spline bases with knots at empirical quantiles.

Each covariate gets a clamped cubic basis of ``K`` functions: boundary knots
at the sample minimum and maximum (repeated four times) and ``K - 4``
interior knots at the type-7 empirical quantiles of the column. Evaluation
outside the boundary clamps ``x`` to it.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import solve_triangular

from specdeconf.errors import DegenerateColumn, ShapeMismatch, SingularGram, TooFewSamples

DEGREE = 3
MIN_K = DEGREE + 2


@dataclass(frozen=True)
class BasisSpec:
    """Knot vector of one covariate's cubic B-spline basis."""

    knots: np.ndarray

    def __post_init__(self):
        self.knots.setflags(write=False)

    @property
    def K(self):
        return self.knots.shape[0] - DEGREE - 1

    @property
    def lo(self):
        return float(self.knots[0])

    @property
    def hi(self):
        return float(self.knots[-1])

    @property
    def interior(self):
        return self.knots[DEGREE + 1 : -(DEGREE + 1)]

    @classmethod
    def from_knots(cls, knots):
        knots = np.array(knots, dtype=float)
        if knots.ndim != 1 or knots.shape[0] < 2 * (DEGREE + 1) + 1:
            raise ShapeMismatch(f"knot vector too short for K >= {MIN_K}: {knots.shape}")
        if np.any(np.diff(knots) < 0):
            raise ShapeMismatch("knot vector must be nondecreasing")
        return cls(knots)


def _collapse_ties(inner, lo, hi):
    """Make interior knots strictly increasing and strictly inside (lo, hi)."""
    delta = 1e-9 * (hi - lo)
    out = inner.copy()
    prev = lo
    for i in range(out.shape[0]):
        out[i] = max(out[i], prev + delta)
        prev = out[i]
    nxt = hi
    for i in range(out.shape[0] - 1, -1, -1):
        out[i] = min(out[i], nxt - delta)
        nxt = out[i]
    return out


def quantile_knots(x, K):
    """Build the knot vector for column ``x`` with ``K`` basis functions."""
    x = np.asarray(x, dtype=float).ravel()
    if K < MIN_K:
        raise ValueError(f"K must be at least {MIN_K} for a cubic basis, got {K}")
    if x.shape[0] < K:
        raise TooFewSamples(f"need n >= K, got n = {x.shape[0]}, K = {K}")
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi - lo < 1e-12 * max(1.0, abs(hi)):
        raise DegenerateColumn(f"column has zero range ({lo})")
    levels = np.arange(1, K - 3) / (K - 3)
    inner = _collapse_ties(np.quantile(x, levels), lo, hi)
    knots = np.concatenate([np.full(DEGREE + 1, lo), inner, np.full(DEGREE + 1, hi)])
    return BasisSpec(knots)


def design_matrix(x, spec):
    """Dense ``n x K`` basis matrix; row ``i`` is the basis evaluated at ``x[i]``."""
    x = np.clip(np.asarray(x, dtype=float).ravel(), spec.lo, spec.hi)
    if x.shape[0] == 0:
        return np.zeros((0, spec.K))
    return BSpline.design_matrix(x, spec.knots, DEGREE).toarray()


def eval_basis(spec, x):
    return design_matrix(np.array([x], dtype=float), spec)[0]


@dataclass(frozen=True)
class OrthoBasis:
    """``B_tilde = B R^{-1}`` with ``R^T R = B^T B / n + ridge_used * I``."""

    B_tilde: np.ndarray = field(repr=False)
    R: np.ndarray
    ridge_used: float

    def to_raw(self, beta_tilde):
        """Orthonormal coordinates to raw spline coefficients."""
        return solve_triangular(self.R, beta_tilde, lower=False)

    def to_tilde(self, beta):
        return self.R @ beta


def orthonormalize(B):
    """Cholesky orthonormalization of one group's design, with a ridge fallback."""
    B = np.asarray(B, dtype=float)
    n, K = B.shape
    if n < K:
        raise TooFewSamples(f"need n >= K to orthonormalize, got n = {n}, K = {K}")
    G = B.T @ B / n
    scale = np.trace(G) / K
    if not np.isfinite(scale) or scale <= 0:
        raise SingularGram("basis Gram matrix has zero trace")
    ridge = 0.0
    for attempt in range(4):
        try:
            L = np.linalg.cholesky(G + ridge * np.eye(K))
        except np.linalg.LinAlgError:
            L = None
        if L is not None and (ridge > 0 or np.min(np.diag(L)) ** 2 >= 1e-10 * scale):
            break
        if attempt == 3:
            raise SingularGram(f"Cholesky failed with ridge {ridge:g}")
        ridge = 1e-10 * scale if ridge == 0.0 else ridge * 100.0
    R = L.T
    B_tilde = solve_triangular(R, B.T, trans="T", lower=False).T
    return OrthoBasis(B_tilde=B_tilde, R=R, ridge_used=ridge)
