"""Shapley-value contribution of supporting agents to the regression task.

The coalition performance score V(S) is the loss reduction achieved by
adding coalition S's features to the central agent's own, normalised by
the reduction achieved by the grand coalition, clamped to [0,1]. Shapley
values average each agent's marginal V over orderings; the exact variant
uses the equivalent coalition-weighted form (2^n coalition evaluations
instead of n! orderings), the Monte-Carlo variant samples orderings.
"""

from dataclasses import dataclass
from itertools import combinations
from math import factorial

import numpy as np

from .datagen import generate_panel, inject_gaussian_noise, substream
from .market_model import AgentProfile, FeaturePanel, with_overrides
from .privacy import perturb_features
from .regression import fit_batch

SCORE_FLOOR = 1e-12
EXACT_AGENT_LIMIT = 12


@dataclass(frozen=True)
class ContributionReport:
    """Per-agent Shapley values plus the coalition scores that produced them.

    ``normalized`` clamps negative values at zero and rescales to sum to 1
    (all zero when no agent contributes); ``stderr`` is populated by the
    Monte-Carlo estimator only.
    """

    shapley: dict
    normalized: dict
    coalition_scores: dict
    stderr: dict = None

    @property
    def agents(self):
        return tuple(sorted(self.shapley))


class CoalitionScorer:
    """Caches regression losses per coalition of supporting agents."""

    def __init__(self, panel: FeaturePanel, agents=None):
        self.panel = panel
        self.agents = tuple(sorted(agents if agents is not None
                                   else [a for a in panel.agents() if a != 0]))
        self._central = panel.features_of(0)
        self._loss_cache = {}
        base = self.loss(frozenset())
        full = self.loss(frozenset(self.agents))
        self._denom = max(SCORE_FLOOR, base - full)

    def loss(self, coalition: frozenset) -> float:
        key = frozenset(coalition)
        if key not in self._loss_cache:
            feats = set(self._central)
            for agent in key:
                feats.update(self.panel.features_of(agent))
            self._loss_cache[key] = fit_batch(self.panel, feats).loss
        return self._loss_cache[key]

    def score(self, coalition) -> float:
        """V(S): normalised loss reduction of central + coalition, in [0,1]."""
        gain = self.loss(frozenset()) - self.loss(frozenset(coalition))
        return float(np.clip(gain / self._denom, 0.0, 1.0))


def coalition_score(panel: FeaturePanel, coalition) -> float:
    return CoalitionScorer(panel).score(coalition)


def shapley_from_scores(agents, score) -> dict:
    """Coalition-weighted Shapley values of an arbitrary score function.

    phi_n = sum over S not containing n of |S|!(|N|-|S|-1)!/|N|! times the
    marginal score of n joining S; equivalent to the ordering average.
    """
    agents = tuple(sorted(agents))
    n = len(agents)
    cache = {}

    def v(coal):
        key = frozenset(coal)
        if key not in cache:
            cache[key] = score(key)
        return cache[key]

    phi = {}
    for a in agents:
        rest = [b for b in agents if b != a]
        total = 0.0
        for size in range(n):
            w = factorial(size) * factorial(n - size - 1) / factorial(n)
            for coal in combinations(rest, size):
                total += w * (v(set(coal) | {a}) - v(coal))
        phi[a] = total
    return phi


def _report(phi: dict, scores: dict, stderr=None) -> ContributionReport:
    clipped = {a: max(v, 0.0) for a, v in phi.items()}
    mass = sum(clipped.values())
    normalized = {a: (v / mass if mass > 0 else 0.0) for a, v in clipped.items()}
    return ContributionReport(shapley=phi, normalized=normalized,
                              coalition_scores=scores, stderr=stderr)


def shapley_exact(panel: FeaturePanel, agents=None) -> ContributionReport:
    """Exact Shapley contributions of the supporting agents.

    Deterministic; guarded to at most 12 agents (the coalition lattice has
    2^n entries). Larger markets should use shapley_mc.
    """
    scorer = CoalitionScorer(panel, agents)
    if len(scorer.agents) > EXACT_AGENT_LIMIT:
        raise ValueError(
            f"exact Shapley is limited to {EXACT_AGENT_LIMIT} agents; "
            "use shapley_mc for larger markets"
        )
    phi = shapley_from_scores(scorer.agents, scorer.score)
    scores = {key: scorer.score(key) for key in scorer._loss_cache}
    return _report(phi, scores)


def shapley_mc(panel: FeaturePanel, agents=None, n_perms: int = 200,
               rng: np.random.Generator = None, seed: int = 0) -> ContributionReport:
    """Monte-Carlo Shapley: average marginal scores over sampled orderings.

    Reports the per-agent standard error of the permutation mean.
    Deterministic given the generator (or seed).
    """
    if n_perms < 1:
        raise ValueError("n_perms must be >= 1")
    if rng is None:
        rng = substream(seed, "shapley")
    scorer = CoalitionScorer(panel, agents)
    agents = scorer.agents
    samples = {a: [] for a in agents}
    for _ in range(n_perms):
        order = rng.permutation(len(agents))
        coal = set()
        prev = scorer.score(coal)
        for idx in order:
            coal.add(agents[idx])
            cur = scorer.score(coal)
            samples[agents[idx]].append(cur - prev)
            prev = cur
    phi = {a: float(np.mean(vals)) for a, vals in samples.items()}
    stderr = {a: float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
              for a, vals in samples.items()}
    scores = {key: scorer.score(key) for key in scorer._loss_cache}
    return _report(phi, scores, stderr)


def contributions_under_distortion(cfg, rho_grid=None, sigma_grid=None,
                                   corr_pair=(2, 3), noise_agent=3,
                                   ldp_spec=None, seed=None) -> list:
    """Normalised contributions over a (correlation, quality-noise) grid.

    For each grid cell the panel is regenerated with the pair correlation
    set to rho and the noise agent's column degraded by N(0, sigma^2);
    records are dicts with keys rho, sigma, agent, normalized_contribution.
    """
    if rho_grid is None:
        rho_grid = np.linspace(0.0, 1.0, 11)
    if sigma_grid is None:
        sigma_grid = np.linspace(0.0, 1.0, 11)
    if seed is None:
        seed = cfg.seed
    j, k = corr_pair
    records = []
    for rho in rho_grid:
        corr = cfg.corr_matrix()
        corr[j, k] = corr[k, j] = rho
        cell_cfg = with_overrides(cfg, corr=tuple(map(tuple, corr)), seed=seed)
        base = generate_panel(cell_cfg)
        for sigma in sigma_grid:
            profile = AgentProfile(id=noise_agent, eps_type=1.0,
                                   extra_noise_std=float(sigma))
            panel = inject_gaussian_noise(base, profile, seed)
            if ldp_spec is not None:
                supporting = [a for a in panel.agents() if a != 0]
                x = perturb_features(panel, supporting, ldp_spec,
                                     substream(seed, "ldp"))
                panel = FeaturePanel(x=x, y=panel.y, ownership=panel.ownership)
            report = shapley_exact(panel)
            for agent in report.agents:
                records.append({
                    "rho": float(rho),
                    "sigma": float(sigma),
                    "agent": f"a{agent + 1}",
                    "normalized_contribution": report.normalized[agent],
                })
    return records


def export_heatmap_csv(records, path) -> None:
    """Write distortion-grid records as CSV: rho,sigma,agent,normalized_contribution."""
    with open(path, "w") as fh:
        fh.write("rho,sigma,agent,normalized_contribution\n")
        for rec in records:
            fh.write(f"{rec['rho']!r},{rec['sigma']!r},{rec['agent']},"
                     f"{rec['normalized_contribution']!r}\n")
