"""Two-stage cross-validation over (K, lambda) on the transformed data.

The spectral transform (or the estimated factors) and the bases are built
once from the full X; folds then split the rows of the transformed system.
Rows of a transformed system are not independent, so this is a heuristic
selection rule rather than an unbiased risk estimate.

Stage 1 scans a coarse 2-d grid (``K_grid`` x multipliers of each K's
lambda_max); stage 2 fixes the winning K and scans a finer geometric lambda
grid around the stage-1 winner.
"""

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from specdeconf.basis import design_matrix, orthonormalize, quantile_knots
from specdeconf.errors import InfeasiblePlan
from specdeconf.grouplasso import GroupProblem, solve_system
from specdeconf.hdam import METHODS, prepare
from specdeconf.spectral import thin_svd

DEFAULT_K_GRID = (5, 7, 9, 12, 15)
DEFAULT_MULTIPLIERS = tuple(np.geomspace(1.0, 1e-3, 10))
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class CVPlan:
    folds: int = 5
    K_grid: tuple = DEFAULT_K_GRID
    multipliers: tuple = DEFAULT_MULTIPLIERS
    fine_count: int = 30
    seed: int = 0
    method: str = "deconfounded"
    rho: float = 0.5
    center_columns: bool = False
    basis_per_fold: bool = False
    tol: float = 1e-6
    kkt_tol: float = 1e-4
    max_iter: int = 10_000
    jobs: int = 1

    def __post_init__(self):
        if self.folds < 2:
            raise InfeasiblePlan(f"folds must be >= 2, got {self.folds}")
        if not self.K_grid or not self.multipliers:
            raise InfeasiblePlan("K_grid and multipliers must be nonempty")
        if any(k < 5 for k in self.K_grid) or list(self.K_grid) != sorted(set(self.K_grid)):
            raise InfeasiblePlan(f"K_grid must be strictly ascending integers >= 5, got {self.K_grid}")
        if any(not 0.0 < m <= 1.0 for m in self.multipliers):
            raise InfeasiblePlan("lambda multipliers must lie in (0, 1]")
        if self.fine_count < 1:
            raise InfeasiblePlan("fine_count must be >= 1")
        if self.method not in METHODS:
            raise InfeasiblePlan(f"unknown method {self.method!r}")
        object.__setattr__(self, "K_grid", tuple(int(k) for k in self.K_grid))
        object.__setattr__(self, "multipliers", tuple(sorted((float(m) for m in self.multipliers), reverse=True)))

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InfeasiblePlan(f"unknown CVPlan fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass
class CVReport:
    """Per-cell CV errors for both stages plus the chosen ``(K, lambda)``."""

    rows: list = field(default_factory=list)
    K: int = None
    lam: float = None

    @property
    def stage1(self):
        return [r for r in self.rows if r["stage"] == 1]

    @property
    def stage2(self):
        return [r for r in self.rows if r["stage"] == 2]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stage", "K", "lambda", "mean_err", "se_err", "chosen"])
        for r in self.rows:
            chosen = int(r["stage"] == 2 and r["K"] == self.K and r["lambda"] == self.lam)
            w.writerow([r["stage"], r["K"], repr(r["lambda"]), repr(r["mean_err"]), repr(r["se_err"]), chosen])
        return buf.getvalue()


def fold_assignment(n, folds, seed):
    """Seeded permutation of ``range(n)`` cut into contiguous, near-equal blocks."""
    perm = np.random.Generator(np.random.Philox(seed)).permutation(n)
    return [np.sort(b) for b in np.array_split(perm, folds)]


def _per_fold_system(X, Y, design, train):
    """Bases rebuilt on the training rows; the transform still comes from full X."""
    p, K = X.shape[1], design.K
    Bt = np.empty((p, X.shape[0], K))
    for j in range(p):
        spec = quantile_knots(X[train, j], K)
        ob = orthonormalize(design_matrix(X[train, j], spec))
        Bt[j] = np.linalg.solve(ob.R.T, design_matrix(X[:, j], spec).T).T
    return GroupProblem(design.Q, Y, Bt, 0.0, design.extra).system


def _path_errors(train_sys, test_sys, lams, plan):
    errs, beta = [], None
    for lam in lams:
        sol = solve_system(train_sys, lam, beta, tol=plan.tol, max_iter=plan.max_iter, kkt_tol=plan.kkt_tol)
        beta = sol.beta_tilde
        r = test_sys.residual(sol.unpenalized, beta)
        errs.append(float(r @ r / test_sys.m))
    return errs


def _select(rows):
    best = min(r["mean_err"] for r in rows)
    ties = [r for r in rows if r["mean_err"] <= best + TIE_RTOL * abs(best)]
    return min(ties, key=lambda r: (-r["lambda"], r["K"]))


def cv_select(X, Y, plan=CVPlan()):
    """Choose ``(K, lambda)`` by two-stage K-fold CV; returns ``(K, lam, report)``."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    n = X.shape[0]
    if n < plan.folds * max(plan.K_grid):
        raise InfeasiblePlan(f"need n >= folds * max(K_grid) = {plan.folds * max(plan.K_grid)}, got n = {n}")
    folds = fold_assignment(n, plan.folds, plan.seed)
    Xc = X - X.mean(axis=0) if plan.center_columns else X
    svd = thin_svd(Xc)

    def fold_systems(K):
        design = prepare(X, K, plan.method, plan.rho, plan.center_columns, svd=svd)
        full = design.problem(Y, 0.0).system
        out = []
        for f, test in enumerate(folds):
            train = np.setdiff1d(np.arange(n), test)
            src = _per_fold_system(Xc, Y, design, train) if plan.basis_per_fold else full
            out.append((src.rows(train), src.rows(test)))
        return full.lambda_max, out

    def run(K, lams, systems):
        if not lams:
            return []
        with ThreadPoolExecutor(max_workers=plan.jobs) as pool:
            per_fold = list(pool.map(lambda ts: _path_errors(ts[0], ts[1], lams, plan), systems))
        E = np.array(per_fold)  # (folds, n_lambda)
        return [
            {
                "K": K,
                "lambda": float(lam),
                "fold_errors": E[:, i].tolist(),
                "mean_err": float(E[:, i].mean()),
                "se_err": float(E[:, i].std(ddof=1) / np.sqrt(plan.folds)),
            }
            for i, lam in enumerate(lams)
        ]

    report = CVReport()
    cache = {}
    for K in plan.K_grid:
        lmax, systems = cache[K] = fold_systems(K)
        for row in run(K, [lmax * m for m in plan.multipliers], systems):
            report.rows.append({"stage": 1, **row})
    win1 = _select(report.stage1)
    K_star, lam1 = win1["K"], win1["lambda"]
    lmax, systems = cache[K_star]
    if lam1 > 0 and plan.fine_count > 1:
        fine = np.geomspace(min(10.0 * lam1, lmax), lam1 / 10.0, plan.fine_count)
    else:
        fine = np.array([lam1])
    # cells already scored in stage 1 are reused, so the common points agree exactly
    done = {r["lambda"]: r for r in report.stage1 if r["K"] == K_star}
    lams = sorted(set(float(v) for v in fine) | {lam1}, reverse=True)
    fresh = {r["lambda"]: r for r in run(K_star, [v for v in lams if v not in done], systems)}
    for lam in lams:
        row = done.get(lam) or fresh[lam]
        report.rows.append({**row, "stage": 2})
    win2 = _select(report.stage2)
    report.K, report.lam = win2["K"], win2["lambda"]
    return report.K, report.lam, report
