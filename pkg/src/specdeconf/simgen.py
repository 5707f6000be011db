"""Seeded generators for the confounded additive-model simulations.

Model::

    X_j = eta_alpha((H Psi)_j) + E_j,    Y = sum_{j<4} f_j(X_j) + eta_beta(H psi) + e

with ``H ~ N(0, I_q)``, ``E ~ N(0, Sigma_E)``, ``e ~ N(0, noise_sd^2)``.

Randomness comes from Philox (a counter-based 64-bit generator). Every draw
component has its own stream, derived as
``SeedSequence(seed, spawn_key=(replicate, tag))`` with the tags in
``STREAMS``, so changing e.g. ``n`` never perturbs the coefficient draw and
replicates never share a stream.
"""

from dataclasses import asdict, dataclass, field, replace

import numpy as np

STREAMS = {"coefficients": 0, "H": 1, "E": 2, "e": 3, "mc": 4, "folds": 5}
TRUE_ACTIVE = (0, 1, 2, 3)


def rng_for(seed, replicate, component):
    ss = np.random.SeedSequence(seed, spawn_key=(replicate, STREAMS[component]))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimConfig:
    n: int = 300
    p: int = 800
    q: int = 5
    influence: str = "equal"  # or "decreasing"
    cs: float = 2.0
    prop: float = 1.0
    sigma_e: str = "identity"  # or "toeplitz"
    rho_e: float = 0.0
    noise_sd: float = 0.5
    alpha: float = 0.0
    beta: float = 0.0
    seed: int = 0
    replicate: int = 0

    def __post_init__(self):
        if self.influence not in ("equal", "decreasing"):
            raise ValueError(f"influence must be 'equal' or 'decreasing', got {self.influence!r}")
        if self.sigma_e not in ("identity", "toeplitz"):
            raise ValueError(f"sigma_e must be 'identity' or 'toeplitz', got {self.sigma_e!r}")
        if self.n < 1 or self.p < 4 or self.q < 0 or self.q > min(self.n, self.p):
            raise ValueError(f"need n >= 1, p >= 4 and 0 <= q <= min(n, p); got n={self.n}, p={self.p}, q={self.q}")
        if not 0.0 <= self.rho_e < 1.0:
            raise ValueError(f"rho_e must lie in [0, 1), got {self.rho_e}")
        if not 0.0 <= self.prop <= 1.0:
            raise ValueError(f"prop must lie in [0, 1], got {self.prop}")
        for name in ("alpha", "beta"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("cs", "noise_sd"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown SimConfig fields: {sorted(unknown)}")
        return cls(**d)

    def with_(self, **kw):
        return replace(self, **kw)

    def sigma_matrix(self):
        if self.sigma_e == "identity" or self.rho_e == 0.0:
            return np.eye(self.p)
        idx = np.arange(self.p)
        return self.rho_e ** np.abs(idx[:, None] - idx[None, :])


def eta(alpha, t):
    """``(1 - alpha) t + alpha |t|``: interpolates between identity and absolute value."""
    return (1.0 - alpha) * t + alpha * np.abs(t)


def f0_component(j, x):
    """True component functions; ``j`` is 0-based, components beyond 3 are zero."""
    x = np.asarray(x, dtype=float)
    if j == 0:
        return -np.sin(2.0 * x)
    if j == 1:
        return 2.0 - 2.0 * np.tanh(x + 0.5)
    if j == 2:
        return 1.0 * x
    if j == 3:
        return 4.0 / (np.exp(x) + np.exp(-x))
    return np.zeros_like(x)


def f0(X):
    """``sum_{j<4} f_j(X[:, j])`` (no intercept)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return sum(f0_component(j, X[:, j]) for j in TRUE_ACTIVE)


def gen_coefficients(config):
    """Draw ``(Psi, psi)``; row ``l`` of Psi is Unif[-a_l, a_l] times a Bernoulli(prop) mask."""
    rng = rng_for(config.seed, config.replicate, "coefficients")
    q, p = config.q, config.p
    if config.influence == "equal":
        amp = np.ones(q)
    else:
        amp = 1.0 / np.arange(1, q + 1)
    Psi = rng.uniform(-1.0, 1.0, size=(q, p)) * amp[:, None]
    mask = rng.random((q, p)) < config.prop
    Psi = np.where(mask, Psi, 0.0)
    psi = rng.uniform(0.0, 1.0, size=q) * config.cs
    return Psi, psi


def sample_errors(config, m, rng, method="cholesky"):
    """``m`` draws of ``E ~ N(0, Sigma_E)``.

    ``method="ar1"`` uses the recursion ``E_j = rho E_{j-1} + sqrt(1-rho^2) z_j``,
    which is the lower Cholesky factor of the Toeplitz matrix applied
    implicitly; both methods consume the same normals.
    """
    Z = rng.standard_normal((m, config.p))
    if config.sigma_e == "identity" or config.rho_e == 0.0:
        return Z
    rho = config.rho_e
    if method == "cholesky":
        L = np.linalg.cholesky(config.sigma_matrix())
        return Z @ L.T
    if method == "ar1":
        E = np.empty_like(Z)
        E[:, 0] = Z[:, 0]
        c = np.sqrt(1.0 - rho * rho)
        for j in range(1, config.p):
            E[:, j] = rho * E[:, j - 1] + c * Z[:, j]
        return E
    raise ValueError(f"unknown method {method!r}")


def sample_x(config, Psi, m, rng_H, rng_E, error_method="cholesky"):
    H = rng_H.standard_normal((m, config.q))
    E = sample_errors(config, m, rng_E, error_method)
    return eta(config.alpha, H @ Psi) + E, H, E


@dataclass
class SimDraw:
    config: SimConfig
    X: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    E: np.ndarray = field(repr=False)
    e: np.ndarray = field(repr=False)
    Psi: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)

    active = TRUE_ACTIVE

    def f0(self, X):
        return f0(X)

    def truth_dict(self):
        return {
            "format": "specdeconf.truth/1",
            "config": self.config.to_dict(),
            "active": list(TRUE_ACTIVE),
            "Psi": self.Psi.tolist(),
            "psi": self.psi.tolist(),
        }


def gen_dataset(config, error_method="cholesky"):
    Psi, psi = gen_coefficients(config)
    rep = config.replicate
    X, H, E = sample_x(
        config, Psi, config.n, rng_for(config.seed, rep, "H"), rng_for(config.seed, rep, "E"), error_method
    )
    e = rng_for(config.seed, rep, "e").standard_normal(config.n) * config.noise_sd
    Y = f0(X) + eta(config.beta, H @ psi) + e
    return SimDraw(config, X, Y, H, E, e, Psi, psi)
