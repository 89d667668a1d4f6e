"""Local differential privacy for traded features and preference sampling.

Traded feature values are clipped to [-B, B] and perturbed with Laplace
noise of scale (2B)/epsilon, the canonical mechanism for real-valued
records: for any two clipped inputs the output densities differ by at most
a factor e^epsilon. Privacy preferences (types) are uniform on
[eps_l, eps_u]. Functions are pure given an explicit generator; callers
must not share one generator across threads.
"""

from dataclasses import dataclass

import numpy as np

from .datagen import substream


@dataclass(frozen=True)
class PrivacySpec:
    """Perturbation parameters: privacy factor, clip width, sensitivity."""

    epsilon: float
    clip_bound: float = 3.0
    sensitivity: float = None

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError("epsilon must be finite and positive")
        if not self.clip_bound > 0:
            raise ValueError("clip_bound must be > 0")
        if self.sensitivity is None:
            object.__setattr__(self, "sensitivity", 2.0 * self.clip_bound)
        elif abs(self.sensitivity - 2.0 * self.clip_bound) > 1e-12:
            raise ValueError("sensitivity must equal 2 * clip_bound")

    @property
    def noise_scale(self):
        return self.sensitivity / self.epsilon


def ldp_perturb(value, spec: PrivacySpec, rng: np.random.Generator):
    """clip(value, +-B) plus Laplace(0, 2B/eps) noise, elementwise."""
    arr = np.asarray(value, dtype=float)
    clipped = np.clip(arr, -spec.clip_bound, spec.clip_bound)
    noisy = clipped + rng.laplace(0.0, spec.noise_scale, size=arr.shape)
    return float(noisy) if np.isscalar(value) else noisy


def perturb_features(panel, agents, spec: PrivacySpec, rng: np.random.Generator):
    """Perturb every column owned by ``agents``; others pass through clean."""
    x = panel.x.copy()
    for agent in sorted(agents):
        for j in panel.features_of(agent):
            x[:, j] = ldp_perturb(x[:, j], spec, rng)
    return x


def sample_preferences(cfg, rng: np.random.Generator = None) -> np.ndarray:
    """One i.i.d. type eps_n ~ U[eps_l, eps_u] per supporting agent."""
    if rng is None:
        rng = substream(cfg.seed, "preferences")
    return rng.uniform(cfg.eps_l, cfg.eps_u, size=cfg.n_supporting)


def preference_cdf(eps, cfg) -> float:
    """F(eps) = clamp((eps - eps_l)/(eps_u - eps_l), 0, 1)."""
    span = cfg.eps_u - cfg.eps_l
    return float(np.clip((eps - cfg.eps_l) / span, 0.0, 1.0))


def uniform_cdf(eps_l: float, eps_u: float):
    """Standalone CDF callable for solvers that do not carry a config."""
    span = eps_u - eps_l

    def cdf(eps: float) -> float:
        if eps <= eps_l:
            return 0.0
        if eps >= eps_u:
            return 1.0
        return (eps - eps_l) / span

    return cdf
