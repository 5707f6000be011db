"""Evaluation metrics for fitted additive models."""

from dataclasses import dataclass

import numpy as np

from specdeconf.hdam import active_set, predict
from specdeconf.simgen import TRUE_ACTIVE, f0, gen_coefficients, rng_for, sample_x


@dataclass(frozen=True)
class MSEResult:
    mse: float
    se: float
    n_mc: int

    def __float__(self):
        return self.mse


def mse_l2(fit, config, n_mc=10_000, seed=None, Psi=None, truth=f0):
    """Monte-Carlo estimate of ``E[(f_hat(X) - f0(X))^2]`` over fresh X.

    Fresh rows share the training draw's ``Psi`` (regenerated from ``config``
    unless given), error law and nonlinearity. ``seed`` defaults to the
    config seed; the Monte-Carlo stream is disjoint from the training draw's.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    if Psi is None:
        Psi = gen_coefficients(config)[0]
    seed = config.seed if seed is None else seed
    rng = rng_for(seed, config.replicate, "mc")
    X, _, _ = sample_x(config, Psi, n_mc, rng, rng)
    sq = (predict(fit, X) - truth(X)) ** 2
    se = float(sq.std(ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else float("nan")
    return MSEResult(float(sq.mean()), se, n_mc)


def screening(fit, truth_active=TRUE_ACTIVE):
    return set(truth_active) <= set(active_set(fit))


def strength_ranking(fit):
    """``(j, ||beta_tilde_j||)`` sorted by decreasing strength, ties by index."""
    norms = fit.group_norms
    order = sorted(range(norms.shape[0]), key=lambda j: (-norms[j], j))
    return [(j, float(norms[j])) for j in order]


def jaccard_topl(rank_a, rank_b, l):
    """Jaccard similarity of the top-``l`` indices of two rankings."""
    if l < 1:
        raise ValueError("l must be >= 1")
    a = {r[0] if isinstance(r, tuple) else r for r in list(rank_a)[:l]}
    b = {r[0] if isinstance(r, tuple) else r for r in list(rank_b)[:l]}
    union = a | b
    return len(a & b) / len(union) if union else 1.0
