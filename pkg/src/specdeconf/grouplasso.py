"""Spectrally transformed group lasso in orthonormalized coordinates.

Solves::

    min  (1/n) || Q (Y - C c - sum_j Bt_j b_j) ||^2  +  lam * sum_j ||b_j||_2

over the unpenalized coefficients ``c`` (intercept first, then any extra
unpenalized columns such as estimated factors) and the group coefficients
``b_j``. The solver is cyclic block coordinate descent: exact least-squares
updates for ``c`` and majorized group soft-thresholding for each ``b_j``,
with an active-set inner loop and a KKT certificate as the stopping rule.
"""

import os
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from specdeconf import _kernels
from specdeconf.errors import NonFinite, NotConverged, ShapeMismatch
from specdeconf.spectral import SpectralTransform, identity_transform

DEBUG = os.environ.get("SPECDECONF_DEBUG", "") not in ("", "0")


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TransformedSystem:
    """The group-lasso data after applying Q.

    ``Zt[j]`` is ``(Q Bt_j)^T`` with shape (K, m); ``C`` holds the transformed
    unpenalized columns (intercept first); ``y`` the transformed response.
    """

    Zt: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)

    @property
    def m(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.Zt.shape[0]

    @property
    def K(self):
        return self.Zt.shape[1]

    @cached_property
    def C_pinv(self):
        return np.linalg.pinv(self.C)

    @cached_property
    def curvatures(self):
        return _kernels.block_curvatures(self.Zt, self.m)

    @cached_property
    def null_residual(self):
        """Residual after fitting the unpenalized columns alone."""
        return self.y - self.C @ (self.C_pinv @ self.y)

    @cached_property
    def lambda_max(self):
        if self.p == 0:
            return 0.0
        g = _kernels.group_gradients(self.Zt, self.null_residual, self.m)
        return float(2.0 * np.max(np.sqrt(np.sum(g * g, axis=1))))

    def rows(self, idx):
        """Restrict to a subset of rows (cross-validation folds)."""
        idx = np.asarray(idx)
        return TransformedSystem(
            np.ascontiguousarray(self.Zt[:, :, idx]), self.y[idx].copy(), self.C[idx].copy()
        )

    def residual(self, unpen, beta):
        p, K, m = self.Zt.shape
        fitted = self.C @ unpen
        if p:
            fitted = fitted + beta.reshape(p * K) @ self.Zt.reshape(p * K, m)
        return self.y - fitted

    def objective(self, unpen, beta, lam):
        r = self.residual(unpen, beta)
        return float(r @ r / self.m + lam * np.sum(np.sqrt(np.sum(beta * beta, axis=1))))


@dataclass(frozen=True)
class GroupProblem:
    """Inputs of one group-lasso solve.

    Parameters
    ----------
    Q : SpectralTransform or None
        ``None`` means the identity.
    Y : ndarray, shape (n,)
    groups : sequence of ndarray, each (n, K)
        The orthonormalized group designs ``Bt_j``.
    lam : float
    extra : ndarray, shape (n, m), optional
        Additional unpenalized columns (after the intercept).
    """

    Q: SpectralTransform
    Y: np.ndarray = field(repr=False)
    groups: object = field(repr=False)
    lam: float = 0.0
    extra: np.ndarray = field(default=None, repr=False)

    @cached_property
    def system(self):
        Y = np.asarray(self.Y, dtype=float)
        n = Y.shape[0]
        Q = self.Q if self.Q is not None else identity_transform(n)
        G = np.asarray(self.groups, dtype=float)
        if G.ndim == 2:
            G = G[None]
        if G.ndim != 3 or (G.shape[0] and G.shape[1] != n):
            raise ShapeMismatch(f"groups must have shape (p, n, K) with n = {n}, got {G.shape}")
        if Q.n != n:
            raise ShapeMismatch(f"transform has n = {Q.n}, response has n = {n}")
        cols = [np.ones((n, 1))]
        if self.extra is not None:
            extra = np.asarray(self.extra, dtype=float).reshape(n, -1)
            cols.append(extra)
        C = np.hstack(cols)
        for name, arr in (("Y", Y), ("groups", G), ("extra", C)):
            if not np.all(np.isfinite(arr)):
                raise NonFinite(f"{name} contains non-finite values")
        p, _, K = G.shape
        Z = Q.apply(G.transpose(1, 0, 2).reshape(n, p * K)) if p else np.zeros((n, 0))
        Zt = np.ascontiguousarray(Z.reshape(n, p, K).transpose(1, 2, 0))
        return TransformedSystem(Zt, Q.apply(Y), Q.apply(C))


@dataclass
class GroupSolution:
    beta0: float
    beta_tilde: np.ndarray
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float
    gamma: np.ndarray = None
    lam: float = 0.0

    @property
    def unpenalized(self):
        g = np.zeros(0) if self.gamma is None else self.gamma
        return np.concatenate([[self.beta0], g])


def _kkt(system, unpen, beta, lam, rt=None):
    if rt is None:
        rt = system.residual(unpen, beta)
    m = system.m
    scale = max(lam, 1e-6 * system.lambda_max, 1e-12)
    res = float(np.max(np.abs(2.0 / m * (system.C.T @ rt)))) if system.C.shape[1] else 0.0
    if system.p:
        grad = 2.0 * _kernels.group_gradients(system.Zt, rt, m)
        norms = np.sqrt(np.sum(beta * beta, axis=1))
        active = norms > 0
        if np.any(active):
            diff = grad[active] - lam * beta[active] / norms[active, None]
            res = max(res, float(np.max(np.sqrt(np.sum(diff * diff, axis=1)))))
        if np.any(~active):
            gn = np.sqrt(np.sum(grad[~active] ** 2, axis=1))
            res = max(res, float(np.max(np.maximum(gn - lam, 0.0))))
    return res / scale


ANDERSON_DEPTH = 5


def _anderson_step(system, history, active, beta, unpen, rt, lam):
    """Extrapolate the last iterates over the working set; keep it only if it lowers the objective.

    The coordinate-descent iterates are updated in place when accepted. The
    extrapolated point need not be a descent point, so it is checked against
    the current objective before replacing the iterate.
    """
    X = np.array(history)
    D = np.diff(X, axis=0)
    G = D @ D.T
    try:
        z = np.linalg.solve(G + 1e-14 * np.trace(G) * np.eye(G.shape[0]), np.ones(G.shape[0]))
    except np.linalg.LinAlgError:
        return rt
    if not np.all(np.isfinite(z)) or z.sum() == 0.0:
        return rt
    c = z / z.sum()
    cand = c @ X[1:]
    K = beta.shape[1]
    nb = active.shape[0] * K
    cand_beta = beta.copy()
    cand_beta[active] = cand[:nb].reshape(-1, K)
    cand_unpen = cand[nb:]
    cand_rt = system.residual(cand_unpen, cand_beta)
    pen = lambda b: lam * np.sum(np.sqrt(np.sum(b[active] ** 2, axis=1)))
    if cand_rt @ cand_rt / system.m + pen(cand_beta) < rt @ rt / system.m + pen(beta):
        beta[active] = cand_beta[active]
        unpen[:] = cand_unpen
        return cand_rt
    return rt


def solve_system(
    system, lam, beta_init=None, tol=1e-7, max_iter=10_000, kkt_tol=None, debug=None, anderson=True
):
    """Core solver on already transformed arrays; returns a GroupSolution."""
    if lam < 0 or not np.isfinite(lam):
        raise ValueError(f"lambda must be finite and >= 0, got {lam}")
    kkt_tol = tol if kkt_tol is None else kkt_tol
    debug = DEBUG if debug is None else debug
    p, K, m = system.Zt.shape
    beta = np.zeros((p, K)) if beta_init is None else np.array(beta_init, dtype=float).reshape(p, K)
    L = system.curvatures
    beta[L <= 0.0] = 0.0
    if lam >= system.lambda_max:
        # the all-zero point is optimal; return it exactly rather than iterate to rounding level
        beta[:] = 0.0
        unpen = system.C_pinv @ system.y
        return GroupSolution(
            beta0=float(unpen[0]),
            beta_tilde=beta,
            objective=system.objective(unpen, beta, lam),
            iterations=0,
            converged=True,
            kkt_residual=_kkt(system, unpen, beta, lam),
            gamma=unpen[1:].copy() if unpen.size > 1 else None,
            lam=float(lam),
        )
    rt = system.residual(np.zeros(system.C.shape[1]), beta)
    Cp = system.C_pinv
    unpen = Cp @ rt
    rt -= system.C @ unpen

    def unpen_step():
        nonlocal unpen
        delta = Cp @ rt
        unpen += delta
        rt[:] -= system.C @ delta

    sweep = _kernels.cd_sweep
    all_groups = np.arange(p, dtype=np.int64)
    prev_obj = system.objective(unpen, beta, lam) if debug else None

    def check_descent():
        nonlocal prev_obj
        obj = system.objective(unpen, beta, lam)
        assert obj <= prev_obj + 1e-12 * max(1.0, abs(prev_obj)), (obj, prev_obj)
        prev_obj = obj

    it = 0
    inner_tol = tol
    kkt = np.inf
    converged = False
    while it < max_iter:
        sweep(system.Zt, rt, beta, L, lam, all_groups, m)
        unpen_step()
        it += 1
        if debug:
            check_descent()
        active = np.flatnonzero(np.any(beta != 0.0, axis=1)).astype(np.int64)
        history = []
        while it < max_iter:
            change = sweep(system.Zt, rt, beta, L, lam, active, m)
            before = unpen.copy()
            unpen_step()
            it += 1
            if debug:
                check_descent()
            if anderson:
                history.append(np.concatenate([beta[active].ravel(), unpen]))
                if len(history) == ANDERSON_DEPTH + 1:
                    rt = _anderson_step(system, history, active, beta, unpen, rt, lam)
                    history = []
                    if debug:
                        prev_obj = system.objective(unpen, beta, lam)
            change = max(change, float(np.max(np.abs(unpen - before))) if unpen.size else 0.0)
            scale = 1.0 + max(float(np.max(np.abs(beta))) if beta.size else 0.0, float(np.max(np.abs(unpen))))
            if change < inner_tol * scale:
                break
        # refresh the residual to shed accumulated rounding before certifying
        rt = system.residual(unpen, beta)
        kkt = _kkt(system, unpen, beta, lam, rt)
        if kkt <= kkt_tol:
            converged = True
            break
        inner_tol = max(inner_tol * 0.1, 1e-15)

    sol = GroupSolution(
        beta0=float(unpen[0]),
        beta_tilde=beta,
        objective=system.objective(unpen, beta, lam),
        iterations=it,
        converged=converged,
        kkt_residual=float(kkt),
        gamma=unpen[1:].copy() if unpen.size > 1 else None,
        lam=float(lam),
    )
    if not converged:
        warnings.warn(
            f"group lasso hit max_iter={max_iter} with KKT residual {kkt:.3g}", ConvergenceWarning, stacklevel=2
        )
    return sol


def lambda_max(problem):
    """Smallest lambda at which every group is zero."""
    return problem.system.lambda_max


def solve(problem, tol=1e-7, max_iter=10_000, warm_start=None, kkt_tol=None, strict=False, debug=None):
    """Solve a :class:`GroupProblem`.

    ``warm_start`` is a (p, K) array or a previous GroupSolution. With
    ``strict=True`` a non-converged solve raises :class:`NotConverged`
    (carrying the best iterate); otherwise ``converged`` is False and a
    ConvergenceWarning is issued.
    """
    if isinstance(warm_start, GroupSolution):
        warm_start = warm_start.beta_tilde
    sol = solve_system(problem.system, problem.lam, warm_start, tol, max_iter, kkt_tol, debug)
    if strict and not sol.converged:
        raise NotConverged("group lasso did not converge", solution=sol)
    return sol


def kkt_residual(solution, problem):
    """Normalized KKT violation of ``solution`` for ``problem``."""
    system = problem.system
    beta = np.asarray(solution.beta_tilde, dtype=float).reshape(system.p, system.K)
    unpen = solution.unpenalized
    if unpen.shape[0] != system.C.shape[1]:
        raise ShapeMismatch("solution and problem disagree on unpenalized columns")
    return _kkt(system, unpen, beta, problem.lam)


def objective(solution, problem):
    return problem.system.objective(solution.unpenalized, solution.beta_tilde, problem.lam)
