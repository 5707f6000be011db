"""High-dimensional additive model estimators.

Three estimators share one pipeline (per-covariate quantile B-splines,
Cholesky orthonormalization, group lasso):

* ``deconfounded``: the response and design are premultiplied by the trim
  transform of X before the group lasso;
* ``naive``: no transform;
* ``estimated_factors``: no transform, plus the top ``q_hat`` scaled left
  singular vectors of X as unpenalized regressors, ``q_hat`` chosen by the
  eigenvalue-ratio rule.

Covariate indices are 0-based throughout.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from specdeconf.basis import BasisSpec, design_matrix, orthonormalize, quantile_knots
from specdeconf.errors import DegenerateColumn, NotConverged, ShapeMismatch
from specdeconf.grouplasso import GroupProblem, solve
from specdeconf.spectral import eigenvalue_ratio_q, identity_transform, thin_svd, trim_transform

METHODS = ("deconfounded", "naive", "estimated_factors")
MODEL_FORMAT = "specdeconf.hdam/1"


@dataclass
class Design:
    """Everything a fit needs that depends on X and K but not on Y or lambda."""

    method: str
    K: int
    specs: list
    B: np.ndarray = field(repr=False)  # (p, n, K) raw basis
    B_tilde: np.ndarray = field(repr=False)  # (p, n, K)
    R: np.ndarray = field(repr=False)  # (p, K, K)
    Q: object = field(repr=False)
    extra: np.ndarray = field(default=None, repr=False)
    rho: float = None
    q_hat: int = None
    centering: np.ndarray = None

    @property
    def n(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.B.shape[0]

    def problem(self, Y, lam):
        return GroupProblem(self.Q, Y, self.B_tilde, lam, self.extra)


def _check_xy(X, Y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeMismatch(f"X must be 2-d, got shape {X.shape}")
    if Y is not None:
        Y = np.asarray(Y, dtype=float).ravel()
        if Y.shape[0] != X.shape[0]:
            raise ShapeMismatch(f"X has {X.shape[0]} rows but Y has {Y.shape[0]} entries")
    return X, Y


def build_bases(X, K):
    """Per-covariate knot specs, raw and orthonormalized designs."""
    n, p = X.shape
    specs, B, Bt, R = [], np.empty((p, n, K)), np.empty((p, n, K)), np.empty((p, K, K))
    for j in range(p):
        try:
            spec = quantile_knots(X[:, j], K)
        except DegenerateColumn as exc:
            raise DegenerateColumn(f"covariate {j}: {exc}", column=j) from None
        specs.append(spec)
        B[j] = design_matrix(X[:, j], spec)
        ob = orthonormalize(B[j])
        Bt[j], R[j] = ob.B_tilde, ob.R
    return specs, B, Bt, R


def prepare(X, K, method="deconfounded", rho=0.5, center_columns=False, svd=None):
    """Build the Y-independent part of a fit (bases and transform)."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    X, _ = _check_xy(X)
    n = X.shape[0]
    if n <= K:
        raise ShapeMismatch(f"need n > K, got n = {n}, K = {K}")
    centering = None
    if center_columns:
        centering = X.mean(axis=0)
        X = X - centering
        svd = None
    specs, B, Bt, R = build_bases(X, K)
    extra, q_hat = None, None
    if method == "deconfounded":
        Q = trim_transform(X, rho, svd=svd)
    else:
        Q = identity_transform(n)
        rho = None
        if method == "estimated_factors":
            svd = thin_svd(X) if svd is None else svd
            q_hat = eigenvalue_ratio_q(X, svd=svd)
            extra = np.sqrt(n) * svd.U[:, :q_hat]
    return Design(method, K, specs, B, Bt, R, Q, extra, rho, q_hat, centering)


@dataclass
class FittedHDAM:
    """A fitted additive model.

    ``beta`` holds raw spline coefficients (``f_j(x) = b_j(x)^T beta[j]``),
    ``beta_tilde`` the orthonormal-coordinate ones; ``group_norms`` are the
    Euclidean norms of the rows of ``beta_tilde``.
    """

    method: str
    K: int
    lam: float
    beta0: float
    specs: list = field(repr=False)
    beta: np.ndarray = field(repr=False)
    beta_tilde: np.ndarray = field(repr=False)
    rho: float = None
    q_hat: int = None
    gamma: np.ndarray = field(default=None, repr=False)
    centering: np.ndarray = field(default=None, repr=False)
    n_train: int = 0
    objective: float = float("nan")
    kkt_residual: float = float("nan")
    iterations: int = 0
    converged: bool = True

    @property
    def p(self):
        return len(self.specs)

    @property
    def group_norms(self):
        return np.sqrt(np.sum(self.beta_tilde**2, axis=1))

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "method": self.method,
            "K": self.K,
            "lambda": self.lam,
            "rho": self.rho,
            "q_hat": self.q_hat,
            "beta0": self.beta0,
            "n_train": self.n_train,
            "objective": self.objective,
            "converged": self.converged,
            "centering": None if self.centering is None else self.centering.tolist(),
            "gamma": None if self.gamma is None else self.gamma.tolist(),
            "covariates": [
                {"knots": s.knots.tolist(), "beta": b.tolist(), "norm": float(g)}
                for s, b, g in zip(self.specs, self.beta, self.group_norms)
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a {MODEL_FORMAT} document")
        covs = d["covariates"]
        beta = np.array([c["beta"] for c in covs], dtype=float).reshape(len(covs), d["K"])
        norms = np.array([c["norm"] for c in covs], dtype=float)
        # raw coefficients are authoritative; only the norms survive from beta_tilde
        bt = np.zeros_like(beta)
        bt[:, 0] = norms
        return cls(
            method=d["method"],
            K=d["K"],
            lam=d["lambda"],
            beta0=d["beta0"],
            specs=[BasisSpec.from_knots(c["knots"]) for c in covs],
            beta=beta,
            beta_tilde=bt,
            rho=d.get("rho"),
            q_hat=d.get("q_hat"),
            gamma=None if d.get("gamma") is None else np.array(d["gamma"]),
            centering=None if d.get("centering") is None else np.array(d["centering"]),
            n_train=d.get("n_train", 0),
            objective=d.get("objective", float("nan")),
            converged=d.get("converged", True),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _center_components(design, sol, beta_raw):
    """Move each component's empirical mean into the intercept.

    Partition of unity makes constants representable in every group, so the
    shift leaves the fitted values unchanged and can only lower the penalty.
    """
    active = np.any(sol.beta_tilde != 0.0, axis=1)
    means = np.where(active, np.einsum("jnk,jk->j", design.B, beta_raw) / design.n, 0.0)
    return float(sol.beta0 + means.sum()), beta_raw - means[:, None]


def fit_design(design, Y, lam, tol=1e-7, max_iter=10_000, warm_start=None, allow_nonconverged=False):
    """Run the group lasso for a prepared design and map back to raw coordinates."""
    Y = np.asarray(Y, dtype=float).ravel()
    if Y.shape[0] != design.n:
        raise ShapeMismatch(f"design has {design.n} rows but Y has {Y.shape[0]} entries")
    problem = design.problem(Y, lam)
    sol = solve(problem, tol=tol, max_iter=max_iter, warm_start=warm_start)
    if not sol.converged and not allow_nonconverged:
        raise NotConverged(f"group lasso did not converge (KKT residual {sol.kkt_residual:.3g})", solution=sol)
    beta_raw = np.linalg.solve(design.R, sol.beta_tilde[:, :, None])[:, :, 0]
    beta0, beta_raw = _center_components(design, sol, beta_raw)
    beta_tilde = np.einsum("jkl,jl->jk", design.R, beta_raw)
    unpen = np.concatenate([[beta0], [] if sol.gamma is None else sol.gamma])
    sysm = problem.system
    return FittedHDAM(
        method=design.method,
        K=design.K,
        lam=float(lam),
        beta0=beta0,
        specs=design.specs,
        beta=beta_raw,
        beta_tilde=beta_tilde,
        rho=design.rho,
        q_hat=design.q_hat,
        gamma=sol.gamma,
        centering=design.centering,
        n_train=design.n,
        objective=sysm.objective(unpen, beta_tilde, lam),
        kkt_residual=sol.kkt_residual,
        iterations=sol.iterations,
        converged=sol.converged,
    )


def fit(X, Y, K, lam, method="deconfounded", rho=0.5, center_columns=False, **solver_opts):
    X, Y = _check_xy(X, Y)
    design = prepare(X, K, method, rho, center_columns)
    return fit_design(design, Y, lam, **solver_opts)


def fit_deconfounded(X, Y, K, lam, rho=0.5, center_columns=False, **solver_opts):
    """Trim-transformed group lasso over per-covariate B-spline bases."""
    return fit(X, Y, K, lam, "deconfounded", rho, center_columns, **solver_opts)


def fit_naive(X, Y, K, lam, center_columns=False, **solver_opts):
    return fit(X, Y, K, lam, "naive", center_columns=center_columns, **solver_opts)


def fit_estimated_factors(X, Y, K, lam, center_columns=False, **solver_opts):
    """Group lasso with the estimated factors as unpenalized linear regressors."""
    return fit(X, Y, K, lam, "estimated_factors", center_columns=center_columns, **solver_opts)


def predict_component(fit, j, x):
    """Value of the fitted component ``j`` at ``x`` (scalar or array), clamped at the boundary."""
    x = np.asarray(x, dtype=float)
    if not 0 <= j < fit.p:
        raise IndexError(f"covariate index {j} out of range for p = {fit.p}")
    if fit.centering is not None:
        x = x - fit.centering[j]
    if not np.any(fit.beta[j]):
        return np.zeros_like(x) if x.ndim else 0.0
    vals = design_matrix(x.ravel(), fit.specs[j]) @ fit.beta[j]
    return vals.reshape(x.shape) if x.ndim else float(vals[0])


def predict(fit, X_new):
    """Additive prediction ``beta0 + sum_j f_j(x_j)``; the factor term is omitted."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[None, :]
    if X_new.ndim != 2 or X_new.shape[1] != fit.p:
        raise ShapeMismatch(f"expected {fit.p} columns, got shape {X_new.shape}")
    out = np.full(X_new.shape[0], fit.beta0)
    for j in active_set(fit):
        out += predict_component(fit, j, X_new[:, j])
    return out


def active_set(fit, tol_rel=1e-8):
    norms = fit.group_norms
    top = norms.max() if norms.size else 0.0
    if top == 0.0:
        return []
    return [int(j) for j in np.flatnonzero(norms > tol_rel * top)]
