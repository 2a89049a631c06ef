"""Monte Carlo estimates of the selection probability and its log-gradient.

Only black-box access to the selection rule is needed: draw first-stage
data at ``theta``, apply the rule, and average the first-stage score over the
draws that land on ``m``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ScenarioModel, SelectionRule


@dataclass(frozen=True)
class SaConfig:
    """``K`` draws per evaluation; ``zero_threshold`` is the raw constant ``c``
    in the hit-count floor ``K * c * n_x**2 / M``."""

    K: int = 1000
    zero_threshold: float = 1e-7
    common_random_numbers: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.zero_threshold < 0:
            raise ValueError("zero_threshold must be >= 0")


def hit_threshold(cfg: SaConfig, n_x: int, M: int) -> int:
    """Minimum number of draws in the selected region for a nonzero gradient."""
    return max(1, int(round(cfg.K * cfg.zero_threshold * n_x**2 / M)))


def draw_selections(model: ScenarioModel, rule: SelectionRule, theta, K: int, rng):
    """``K`` first-stage ML draws at ``theta`` and the rule's choice for each."""
    xhat = model.sample_ml_x(np.asarray(theta, dtype=float), K, rng)
    return xhat, rule.select_many(xhat)


def conditional_score_mean(scores: np.ndarray, hits: np.ndarray, threshold: int):
    n = int(np.count_nonzero(hits))
    if n < threshold:
        return np.zeros(scores.shape[1]), n
    return scores[hits].mean(axis=0), n


def estimate_g(model: ScenarioModel, rule: SelectionRule, theta, m: int, cfg: SaConfig,
               rng: np.random.Generator, return_hits: bool = False):
    """Stochastic-approximation estimate of ``grad log Pr(Psi = m; theta)``.

    Returns the zero vector when fewer than :func:`hit_threshold` draws select
    ``m``.
    """
    theta = np.asarray(theta, dtype=float)
    xhat, sel = draw_selections(model, rule, theta, cfg.K, rng)
    scores = model.score_x_from_ml(xhat, theta)
    g, n = conditional_score_mean(scores, sel == m, hit_threshold(cfg, model.n_x, model.dim))
    return (g, n) if return_hits else g


def selection_prob_mc(model: ScenarioModel, rule: SelectionRule, theta, cfg: SaConfig,
                      rng: np.random.Generator) -> np.ndarray:
    """Empirical selection frequencies over ``K`` draws (sums to one)."""
    _, sel = draw_selections(model, rule, theta, cfg.K, rng)
    return np.bincount(sel, minlength=model.dim) / cfg.K
