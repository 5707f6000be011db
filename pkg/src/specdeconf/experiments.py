"""Named simulation scenarios: CV, fit and score every method on every replicate.

Each scenario varies one knob (or the nonlinearity pair) of :class:`SimConfig`
over a grid. ``desk=True`` swaps in smaller sizes, a coarser CV plan and
fewer replicates so a scenario finishes in minutes on one core.
"""

import itertools
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from specdeconf.hdam import METHODS, active_set, fit
from specdeconf.metrics import mse_l2, screening
from specdeconf.modelselect import CVPlan, cv_select
from specdeconf.simgen import SimConfig, gen_dataset, rng_for

# full-size grids follow the published study; desk grids keep the shape at n <= 300
SCENARIOS = {
    "var-n": {
        "base": {"p": 300},
        "grid": {"n": (50, 100, 200, 400, 800)},
        "desk_base": {"p": 300},
        "desk_grid": {"n": (75, 150, 300)},
    },
    "var-p": {
        "base": {"n": 300},
        "grid": {"p": (50, 100, 200, 400, 800)},
        "desk_base": {"n": 150},
        "desk_grid": {"p": (50, 150, 300)},
    },
    "var-cs": {
        "base": {"n": 400, "p": 500},
        "grid": {"cs": (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0)},
        "desk_base": {"n": 150, "p": 300},
        "desk_grid": {"cs": (0.0, 1.0, 2.0, 3.0)},
    },
    "var-prop": {
        "base": {"n": 400, "p": 500},
        "grid": {"prop": (0.0, 0.1, 0.25, 0.5, 0.75, 1.0)},
        "desk_base": {"n": 150, "p": 300},
        "desk_grid": {"prop": (0.0, 0.25, 0.5, 1.0)},
    },
    "nonlinear-grid": {
        "base": {"n": 400, "p": 500},
        "grid": {"alpha": (0.0, 0.25, 0.5, 0.75, 1.0), "beta": (0.0, 0.25, 0.5, 0.75, 1.0)},
        "desk_base": {"n": 150, "p": 300},
        "desk_grid": {"alpha": (0.0, 0.5, 1.0), "beta": (0.0, 0.5, 1.0)},
    },
}
FULL_REPLICATES = 100
DESK_REPLICATES = 2
TOEPLITZ_RHO = 0.8

# coarse plan used at desk scale and by the acceptance suite
DESK_PLAN = CVPlan(K_grid=(7, 9, 12), multipliers=tuple(np.geomspace(1.0, 1e-2, 6)), fine_count=8)

METRICS = ("mse", "mse_se", "active_size", "screening", "K", "lambda", "q_hat")


def scenario_cells(name, desk=False):
    """``[(label, overrides), ...]`` in grid order."""
    if name not in SCENARIOS:
        raise KeyError(name)
    sc = SCENARIOS[name]
    base, grid = (sc["desk_base"], sc["desk_grid"]) if desk else (sc["base"], sc["grid"])
    keys = list(grid)
    cells = []
    for values in itertools.product(*(grid[k] for k in keys)):
        over = dict(base, **dict(zip(keys, values)))
        label = ",".join(f"{k}={v!r}" for k, v in zip(keys, values))
        cells.append((label, over))
    return cells


def fold_seed(config):
    return int(rng_for(config.seed, config.replicate, "folds").integers(2**63))


def evaluate(config, method, plan=DESK_PLAN, draw=None, n_mc=10_000):
    """CV-select, refit on the full draw and score one method; returns a metric dict."""
    draw = gen_dataset(config) if draw is None else draw
    plan = replace(plan, method=method, seed=fold_seed(config))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        K, lam, _ = cv_select(draw.X, draw.Y, plan)
        f = fit(draw.X, draw.Y, K, lam, method, plan.rho, plan.center_columns, allow_nonconverged=True)
    mse = mse_l2(f, config, n_mc, Psi=draw.Psi)
    return {
        "mse": mse.mse,
        "mse_se": mse.se,
        "active_size": len(active_set(f)),
        "screening": int(screening(f)),
        "K": K,
        "lambda": lam,
        "q_hat": f.q_hat,
        "fit": f,
    }


def _run_task(args):
    config, methods, plan, n_mc = args
    draw = gen_dataset(config)
    out = []
    for method in methods:
        res = evaluate(config, method, plan, draw, n_mc)
        out.append((method, {k: res[k] for k in METRICS}))
    return out


def default_jobs():
    try:
        return max(1, int(os.environ.get("SPECDECONF_JOBS", "1")))
    except ValueError:
        return 1


def run_experiment(
    name,
    influence="equal",
    sigma_e="identity",
    replicates=None,
    seed=0,
    desk=False,
    jobs=None,
    methods=METHODS,
    plan=None,
    n_mc=10_000,
):
    """Run a named scenario; returns long-format rows ``(scenario, method, replicate, metric, value)``.

    Row order follows the grid, then ``methods``, then replicate, then
    ``METRICS``, independent of ``jobs``.
    """
    cells = scenario_cells(name, desk)
    if replicates is None:
        replicates = DESK_REPLICATES if desk else FULL_REPLICATES
    plan = (DESK_PLAN if desk else CVPlan()) if plan is None else plan
    rho_e = TOEPLITZ_RHO if sigma_e == "toeplitz" else 0.0
    tasks, keys = [], []
    for label, over in cells:
        for r in range(replicates):
            cfg = SimConfig(influence=influence, sigma_e=sigma_e, rho_e=rho_e, seed=seed, replicate=r, **over)
            tasks.append((cfg, tuple(methods), plan, n_mc))
            keys.append((label, r))
    jobs = default_jobs() if jobs is None else jobs
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    by_key = dict(zip(keys, results))
    rows = []
    for label, _ in cells:
        for mi, method in enumerate(methods):
            for r in range(replicates):
                _, metrics = by_key[(label, r)][mi]
                for m in METRICS:
                    if metrics[m] is not None:
                        rows.append((label, method, r, m, metrics[m]))
    return rows
