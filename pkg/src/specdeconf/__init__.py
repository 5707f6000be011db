"""Spectral deconfounding for high-dimensional sparse additive models."""

from specdeconf.errors import (
    DegenerateColumn,
    InfeasiblePlan,
    InvalidQ,
    InvalidRho,
    NonFinite,
    NotConverged,
    NotPositiveDefinite,
    RankDeficient,
    ShapeMismatch,
    SingularCovariance,
    SingularGram,
    SpecDeconfError,
    TooFewSamples,
    ZeroMatrix,
)
from specdeconf.spectral import (
    SpectralTransform,
    eigenvalue_ratio_q,
    identity_transform,
    pca_transform,
    thin_svd,
    trim_transform,
)
from specdeconf.basis import BasisSpec, OrthoBasis, design_matrix, eval_basis, orthonormalize, quantile_knots
from specdeconf.grouplasso import GroupProblem, GroupSolution, kkt_residual, lambda_max, solve
from specdeconf.hdam import (
    FittedHDAM,
    active_set,
    fit_deconfounded,
    fit_estimated_factors,
    fit_naive,
    predict,
    predict_component,
)
from specdeconf.simgen import SimConfig, SimDraw, eta, f0_component, gen_coefficients, gen_dataset
from specdeconf.modelselect import CVPlan, CVReport, cv_select
from specdeconf.metrics import jaccard_topl, mse_l2, screening, strength_ranking
from specdeconf.diagnostics import compatibility_lower_bound, confounding_leakage, singular_values

__version__ = "0.1.0"
