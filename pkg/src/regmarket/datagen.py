"""Seeded synthetic data generation for correlated feature panels.

One master seed is split into independent per-purpose streams so changing
one knob (e.g. an agent's quality noise) never perturbs unrelated draws.
Feature columns are standard-normal marginals coupled through the linear
construction x_j = rho*x_k + sqrt(1-rho^2)*z, generalised to arbitrary
correlation matrices by a semidefinite-tolerant Cholesky factor.
"""

import numpy as np

from .market_model import FeaturePanel, MarketConfig

# Stable purpose -> spawn-key mapping for substream derivation.
_PURPOSES = {
    "panel": 0,
    "agent_noise": 1,
    "preferences": 2,
    "shapley": 3,
    "ldp": 4,
    "mechanism": 5,
}


def substream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Deterministic child generator for one purpose (and optional index)."""
    key = (_PURPOSES[purpose], index)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def semidefinite_cholesky(corr: np.ndarray) -> np.ndarray:
    """Lower-triangular factor L with L @ L.T == corr for PSD matrices.

    Unlike np.linalg.cholesky this tolerates singular matrices (e.g. a
    perfectly correlated pair), zeroing the pivot column so duplicated
    factors reproduce the degenerate linear construction exactly.
    """
    corr = np.asarray(corr, dtype=float)
    k = corr.shape[0]
    low = np.zeros((k, k))
    for j in range(k):
        d = corr[j, j] - low[j, :j] @ low[j, :j]
        if d < 1e-12:
            low[j, j] = 0.0
            continue
        low[j, j] = np.sqrt(d)
        for i in range(j + 1, k):
            low[i, j] = (corr[i, j] - low[i, :j] @ low[j, :j]) / low[j, j]
    return low


def generate_panel(cfg: MarketConfig) -> FeaturePanel:
    """Generate the tau x K feature matrix and target series for ``cfg``.

    Columns have standard-normal marginals with pairwise correlation
    cfg.corr; y_t = theta_0 + sum_k theta_k x_{k,t} + n_t with
    n_t ~ N(0, noise_var). Fully determined by cfg.seed.
    """
    rng = substream(cfg.seed, "panel")
    k = cfg.n_features
    z = rng.standard_normal((cfg.tau, k))
    low = semidefinite_cholesky(cfg.corr_matrix())
    x = z @ low.T
    theta = cfg.theta_vector()
    y = theta[0] + x @ theta[1:]
    if cfg.noise_var > 0:
        y = y + np.sqrt(cfg.noise_var) * rng.standard_normal(cfg.tau)
    return FeaturePanel(x=x, y=y, ownership={j: j for j in range(k)})


def inject_gaussian_noise(panel: FeaturePanel, agent, seed: int) -> FeaturePanel:
    """Return a copy of ``panel`` with N(0, sigma^2) added to the agent's columns.

    ``agent`` is an AgentProfile; its ``extra_noise_std`` is the sigma knob
    modelling sensor quality (applied before any privacy perturbation).
    Other agents' columns are untouched; sigma = 0 returns the panel as is.
    """
    sigma = agent.extra_noise_std
    if sigma == 0.0:
        return panel
    cols = agent.features or panel.features_of(agent.id)
    rng = substream(seed, "agent_noise", agent.id)
    x = panel.x.copy()
    for j in cols:
        x[:, j] = x[:, j] + sigma * rng.standard_normal(panel.tau)
    return FeaturePanel(x=x, y=panel.y, ownership=panel.ownership)


def export_panel_csv(panel: FeaturePanel, path) -> None:
    """Write the panel as CSV: header t,x1..xK,y; 17 significant digits."""
    with open(path, "w") as fh:
        cols = ",".join(f"x{j + 1}" for j in range(panel.n_features))
        fh.write(f"t,{cols},y\n")
        for t in range(panel.tau):
            row = ",".join(f"{v:.17g}" for v in panel.x[t])
            fh.write(f"{t + 1},{row},{panel.y[t]:.17g}\n")
