"""Shared domain types and configuration schema for the regression data market.

A market consists of one central agent (the learner, agent index 0) buying
feature observations from strategic supporting agents (indices 1..n-1).
This module only defines value objects and their validation; all algorithms
live in the sibling modules.

All types are immutable after construction and safe to share across threads.
"""

import json
from dataclasses import dataclass, field, fields, asdict, replace

import numpy as np

LN10 = 2.302585092994046
LN60 = 4.0943445622221


class ConfigError(ValueError):
    """Raised when a market configuration violates an invariant."""


@dataclass(frozen=True)
class MarketConfig:
    """Full scenario description for one simulated regression market.

    The central agent owns feature 1; supporting agent j (j = 2..n) owns
    feature j. ``theta_true`` carries the bias first, so its length is K+1
    where K is the side of ``corr``. Per supporting-agent parameter vectors
    (``psi``, ``phi``, ``marginal_cost``, ``extra_noise_std``) are ordered
    a_2, a_3, ..., a_n.
    """

    n_agents: int = 4
    tau: int = 10000
    theta_true: tuple = (0.2, 0.4, -0.3, -0.6, 0.2)
    noise_var: float = 0.3
    corr: tuple = ()                    # K x K nested tuples; () means identity
    alpha: float = 0.45
    beta: float = -0.4
    gamma: float = 1.0
    psi: tuple = ()                     # defaults to all-ones
    phi: tuple = ()                     # defaults to all-ones
    marginal_cost: tuple = ()           # per-agent C_n, defaults to 0.3
    eps_l: float = 0.1
    eps_u: float = LN60
    eps_ref: float = LN10
    zeta_ref: float = 0.9
    p_max: float = 3.0
    seed: int = 0
    clip_bound: float = 3.0
    extra_noise_std: tuple = ()         # per-agent quality-noise sigma, defaults to zeros
    valuation_form: str = "scaled_log"  # or "log_power": literal {ln[a*e*p+1]}^(-beta)
    performance_form: str = "reciprocal"  # or "gap": relative loss-improvement in [0,1]
    leakage_corr_coupling: bool = False  # phi_n scaled by (1 + sum |rho_nm|)

    def __post_init__(self):
        n_sup = self.n_agents - 1
        k = self.n_agents  # one feature per agent by default
        if not self.corr:
            ident = tuple(tuple(1.0 if i == j else 0.0 for j in range(k)) for i in range(k))
            object.__setattr__(self, "corr", ident)
        else:
            object.__setattr__(
                self, "corr", tuple(tuple(float(v) for v in row) for row in self.corr)
            )
        object.__setattr__(self, "theta_true", tuple(float(v) for v in self.theta_true))
        for name, default in (
            ("psi", 1.0),
            ("phi", 1.0),
            ("marginal_cost", 0.3),
            ("extra_noise_std", 0.0),
        ):
            got = getattr(self, name)
            if not got:
                got = (default,) * n_sup
            object.__setattr__(self, name, tuple(float(v) for v in got))

    @property
    def n_features(self):
        return len(self.corr)

    @property
    def n_supporting(self):
        return self.n_agents - 1

    def corr_matrix(self):
        return np.array(self.corr, dtype=float)

    def theta_vector(self):
        return np.array(self.theta_true, dtype=float)


def validate_config(cfg: MarketConfig) -> MarketConfig:
    """Check every MarketConfig invariant; return ``cfg`` unchanged if valid.

    Raises ConfigError naming the first violated field. Validation is
    idempotent: a validated config validates again to the same object.
    """
    if cfg.n_agents < 1:
        raise ConfigError("n_agents must be at least 1 (the central agent)")
    if cfg.tau < 1:
        raise ConfigError("tau must be a positive number of time steps")
    if cfg.noise_var < 0:
        raise ConfigError("noise_var must be >= 0")
    if not cfg.alpha > 0:
        raise ConfigError("alpha must be > 0")
    if not (-1.0 < cfg.beta < 0.0):
        raise ConfigError("beta must lie strictly in (-1,0)")
    if not cfg.gamma > 0:
        raise ConfigError("gamma must be > 0")

    corr = cfg.corr_matrix()
    k = corr.shape[0]
    if corr.shape != (k, k):
        raise ConfigError("corr must be a square matrix")
    if k != cfg.n_agents:
        raise ConfigError(
            f"corr is {k}x{k} but n_agents={cfg.n_agents}; default ownership "
            "assigns one feature per agent"
        )
    if np.any(np.abs(corr) > 1.0 + 1e-12):
        raise ConfigError("correlation outside [-1,1] in corr")
    if not np.allclose(corr, corr.T, atol=1e-12):
        raise ConfigError("corr must be symmetric")
    if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
        raise ConfigError("corr must have unit diagonal")
    if np.linalg.eigvalsh(corr).min() < -1e-8:
        raise ConfigError("corr is not positive semidefinite")

    if len(cfg.theta_true) != k + 1:
        raise ConfigError(
            f"theta_true must have length K+1={k + 1} (bias first), got {len(cfg.theta_true)}"
        )

    n_sup = cfg.n_supporting
    for name in ("psi", "phi", "marginal_cost", "extra_noise_std"):
        vec = getattr(cfg, name)
        if len(vec) != n_sup:
            raise ConfigError(f"{name} must have one entry per supporting agent ({n_sup})")
        if any(v < 0 for v in vec):
            raise ConfigError(f"{name} entries must be >= 0")

    if not 0 <= cfg.eps_l < cfg.eps_u:
        raise ConfigError("preference bounds must satisfy 0 <= eps_l < eps_u")
    if not cfg.eps_ref > 0:
        raise ConfigError("eps_ref must be > 0")
    if cfg.eps_ref > cfg.eps_u:
        raise ConfigError("eps_ref must not exceed eps_u")
    if not cfg.zeta_ref > 0:
        raise ConfigError("zeta_ref must be > 0")
    if not cfg.p_max > 0:
        raise ConfigError("p_max must be > 0")
    if cfg.seed < 0:
        raise ConfigError("seed must be an unsigned integer")
    if not cfg.clip_bound > 0:
        raise ConfigError("clip_bound must be > 0")
    if cfg.valuation_form not in ("scaled_log", "log_power"):
        raise ConfigError("valuation_form must be 'scaled_log' or 'log_power'")
    if cfg.performance_form not in ("reciprocal", "gap"):
        raise ConfigError("performance_form must be 'reciprocal' or 'gap'")
    return cfg


def config_to_dict(cfg: MarketConfig) -> dict:
    return asdict(cfg)


def config_from_dict(data: dict) -> MarketConfig:
    """Build a MarketConfig from a plain dict; unknown keys are an error."""
    known = {f.name for f in fields(MarketConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = dict(data)
    for name in ("theta_true", "psi", "phi", "marginal_cost", "extra_noise_std"):
        if name in kwargs and kwargs[name] is not None:
            kwargs[name] = tuple(kwargs[name])
    if "corr" in kwargs and kwargs["corr"]:
        kwargs["corr"] = tuple(tuple(row) for row in kwargs["corr"])
    return MarketConfig(**kwargs)


def dump_config(cfg: MarketConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2)


def load_config(path) -> MarketConfig:
    """Parse and validate a JSON scenario file mirroring MarketConfig fields."""
    with open(path) as fh:
        data = json.load(fh)
    return validate_config(config_from_dict(data))


def with_overrides(cfg: MarketConfig, **kwargs) -> MarketConfig:
    return validate_config(replace(cfg, **kwargs))


@dataclass(frozen=True)
class FeaturePanel:
    """tau x K matrix of feature observations plus the target series.

    ``ownership`` maps feature index (0-based) -> agent index (0 = central).
    Data is complete: every feature is owned by exactly one agent.
    """

    x: np.ndarray
    y: np.ndarray
    ownership: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError("x must be tau x K and y length tau")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ValueError("panel contains missing or non-finite entries")
        own = dict(self.ownership) if self.ownership else {k: k for k in range(x.shape[1])}
        if sorted(own) != list(range(x.shape[1])):
            raise ValueError("each feature must be owned by exactly one agent")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "ownership", own)

    @property
    def tau(self):
        return self.x.shape[0]

    @property
    def n_features(self):
        return self.x.shape[1]

    def features_of(self, agent: int) -> tuple:
        return tuple(k for k, a in sorted(self.ownership.items()) if a == agent)

    def agents(self) -> tuple:
        return tuple(sorted(set(self.ownership.values())))


@dataclass(frozen=True)
class AgentProfile:
    """A supporting agent: private privacy type, participation state, holdings."""

    id: int
    eps_type: float
    q: float = 0.0
    features: tuple = ()
    extra_noise_std: float = 0.0

    def __post_init__(self):
        if not self.eps_type > 0:
            raise ValueError("eps_type must be > 0")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must lie in [0,1]")
        if self.extra_noise_std < 0:
            raise ValueError("extra_noise_std must be >= 0")
        object.__setattr__(self, "features", tuple(self.features))


@dataclass(frozen=True)
class EquilibriumState:
    """Follower equilibrium plus the leader's posted terms for one iteration.

    Per-agent tuples are ordered a_2..a_n. ``allocation`` sums to at most
    ``price_offered`` (ex-post budget); non-participants receive 0.
    """

    q_star: tuple
    eps_response: tuple
    eps_asked: float
    price_offered: float
    allocation: tuple
    contributions: tuple
    performance: float

    def __post_init__(self):
        for name in ("q_star", "eps_response", "allocation", "contributions"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if any(not 0.0 <= q <= 1.0 for q in self.q_star):
            raise ValueError("q_star entries must lie in [0,1]")
        if any(a < 0 for a in self.allocation):
            raise ValueError("allocations must be >= 0")
        if sum(self.allocation) > self.price_offered + 1e-9:
            raise ValueError("allocations exceed the offered price budget")


@dataclass(frozen=True)
class IterationRecord:
    """One outer iteration of the market mechanism."""

    index: int
    active: tuple
    state: EquilibriumState
    central_utility: float
    agent_utilities: tuple
    participants: tuple
    losses: dict
    feasible: bool


@dataclass(frozen=True)
class MarketTrace:
    """Ordered per-iteration record of one market run, for export."""

    config: MarketConfig
    mode: str
    iterations: tuple
    converged: bool
    eps_types: tuple

    def __post_init__(self):
        idx = [rec.index for rec in self.iterations]
        if idx != sorted(idx) or len(set(idx)) != len(idx):
            raise ValueError("iteration indices must be strictly increasing")

    @property
    def n_iterations(self):
        return len(self.iterations)

    @property
    def final(self):
        return self.iterations[-1] if self.iterations else None
