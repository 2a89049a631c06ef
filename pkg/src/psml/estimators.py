"""ML variants and the post-selection ML (PSML) family.

All PSML variants share one engine, :func:`mbp_psml`, which iterates the
score equation ``grad loglik(theta) = g(theta)`` by maximization by parts:
the joint log-likelihood is the easy part and the log selection probability
enters only through its gradient ``g`` evaluated at the previous iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ScenarioModel, SelectionRule, information_dominance_check
from .sa import SaConfig, estimate_g

UPDATE_MODES = ("linear-efficient", "score-solve")
G_SOURCES = ("analytic-full", "analytic-pairwise", "stochastic")


@dataclass(frozen=True)
class EstimatorConfig:
    delta: float = 1e-6
    max_iter: int = 50
    update_mode: str = "linear-efficient"
    g_source: str = "analytic-pairwise"
    track_dominance: bool = False

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.update_mode not in UPDATE_MODES:
            raise ValueError(f"update_mode must be one of {UPDATE_MODES}")
        if self.g_source not in G_SOURCES:
            raise ValueError(f"g_source must be one of {G_SOURCES}")


@dataclass
class IterationTrace:
    iterates: list = field(default_factory=list)
    converged: bool = False
    g_evaluations: int = 0
    distances: list = field(default_factory=list)
    dominance: list = field(default_factory=list)

    @property
    def n_iter(self) -> int:
        return len(self.distances)


class EstimationError(RuntimeError):
    """Iteration failure; ``trace`` holds the iterates reached so far."""

    def __init__(self, msg: str, trace: IterationTrace):
        super().__init__(msg)
        self.trace = trace


# -- ML variants -------------------------------------------------------------

def ml_joint(model: ScenarioModel, x, y, m: int) -> np.ndarray:
    return model.ml_joint(x, y, m)


def ml_first(model: ScenarioModel, x) -> np.ndarray:
    return model.ml_x(x)


def ml_split_y(model: ScenarioModel, y, m: int, coords: Sequence[int] | None = None) -> np.ndarray:
    """Second-stage-only ML (Psi-unbiased).

    Coordinates not identified by ``y`` come back as NaN; asking for one of
    them explicitly through ``coords`` is an error.
    """
    est = model.ml_y(y, m)
    if coords is not None:
        missing = [int(c) for c in coords if np.isnan(est[c])]
        if missing:
            raise ValueError(f"coordinates {missing} are not identified by the second stage")
    return est


def james_stein(ml_estimate, J) -> np.ndarray:
    """``(1 - (M - 2) / (t' J t)) t``; a zero quadratic form returns ``t``."""
    t = np.asarray(ml_estimate, dtype=float)
    if len(t) < 3:
        raise ValueError("James-Stein shrinkage needs M >= 3")
    q = float(t @ np.asarray(J) @ t)
    if q == 0.0:
        return t.copy()
    return (1.0 - (len(t) - 2) / q) * t


# -- MBP-PSML engine -------------------------------------------------------------

def mbp_psml(model: ScenarioModel, x, y, m: int, g_fn: Callable[[np.ndarray], np.ndarray],
             config: EstimatorConfig = EstimatorConfig(), coords: Sequence[int] | None = None):
    """Maximization-by-parts solution of the PSML score equation.

    ``g_fn(theta)`` returns (an approximation of) ``grad log Pr(Psi=m; theta)``.
    Starting from the joint ML, ``linear-efficient`` mode applies
    ``theta_i = theta_ML - J(theta_{i-1})^{-1} g(theta_{i-1})`` and
    ``score-solve`` mode solves ``grad loglik(theta_i) = g(theta_{i-1})``.

    When ``coords`` is given only those coordinates move; the rest stay at
    the ML value and the stopping distance is measured on ``coords`` alone.
    A run that hits ``max_iter`` returns its last iterate with
    ``trace.converged = False``.
    """
    theta_ml = model.ml_joint(x, y, m)
    theta = model.project(theta_ml.copy())
    trace = IterationTrace(iterates=[theta])
    sel = slice(None) if coords is None else np.asarray(coords, dtype=np.intp)

    for _ in range(config.max_iter):
        g = np.asarray(g_fn(theta), dtype=float)
        trace.g_evaluations += 1
        if config.track_dominance:
            trace.dominance.append(information_dominance_check(model, theta, m, g))
        try:
            if config.update_mode == "linear-efficient":
                new = theta_ml - model.fim_joint_inv(theta, m) @ g
            else:
                new = model.score_solve(x, y, m, g)
        except np.linalg.LinAlgError as exc:
            raise EstimationError(f"singular Fisher information: {exc}", trace) from exc
        except ArithmeticError as exc:
            raise EstimationError(f"score solve failed: {exc}", trace) from exc
        if coords is not None:
            kept = theta_ml.copy()
            kept[sel] = new[sel]
            new = kept
        new = model.project(new)
        if not np.all(np.isfinite(new)):
            raise EstimationError("non-finite iterate", trace)
        dist = float(np.linalg.norm(new[sel] - theta[sel]))
        trace.iterates.append(new)
        trace.distances.append(dist)
        theta = new
        if dist <= config.delta:
            trace.converged = True
            break
    return theta, trace


def psml(model: ScenarioModel, x, y, m: int, config: EstimatorConfig = EstimatorConfig()):
    """MBP-PSML with the exact selection gradient (closed form needed, M <= 2)."""
    return mbp_psml(model, x, y, m, lambda t: model.selection_grad(t, m), config)


def second_best_psml(model: ScenarioModel, rule: SelectionRule, x, y,
                     config: EstimatorConfig = EstimatorConfig()):
    """PSML with the pairwise probability against the runner-up ``mt``.

    For diagonal-information models only coordinates ``m`` and ``mt`` are
    updated; the others keep their ML values.
    """
    if not rule.supports_second_best:
        raise ValueError(f"{type(rule).__name__} cannot report a second-best index")
    xhat = model.ml_x(x)
    m = rule.select(xhat)
    if model.dim == 1:
        return mbp_psml(model, x, y, m, lambda t: np.zeros(1), config)
    mt = rule.second_best(xhat)
    coords = [m, mt] if getattr(model, "diagonal_fim", False) else None
    return mbp_psml(model, x, y, m, lambda t: model.pairwise_grad(t, m, mt), config, coords)


def sa_psml(model: ScenarioModel, rule: SelectionRule, x, y,
            config: EstimatorConfig = EstimatorConfig(), sa_cfg: SaConfig = SaConfig(),
            rng: np.random.Generator | None = None):
    """PSML with the Monte Carlo gradient; fresh draws at every iterate.

    With ``sa_cfg.common_random_numbers`` every evaluation reuses one seed,
    which makes the estimated gradient a smooth function of ``theta``.
    """
    rng = np.random.default_rng() if rng is None else rng
    m = rule.select(model.ml_x(x))
    if sa_cfg.common_random_numbers:
        seed = int(rng.integers(2**63))

        def g_fn(t):
            return estimate_g(model, rule, t, m, sa_cfg, np.random.default_rng(seed))
    else:
        def g_fn(t):
            return estimate_g(model, rule, t, m, sa_cfg, rng)
    return mbp_psml(model, x, y, m, g_fn, config)


# -- brute-force oracle ----------------------------------------------------------

def psml_grid(model: ScenarioModel, x, y, m: int, logprob_fn: Callable | None = None,
              points: int = 21, levels: int = 12, half_width: float = 6.0,
              shrink: float = 4.0) -> np.ndarray:
    """Nested-grid maximizer of ``loglik_joint - log Pr(Psi=m)`` for M <= 3.

    The first grid spans ``half_width`` standard deviations (from the joint
    FIM at the ML) around the ML; each level recentres on the best point and
    shrinks the span by ``shrink``. ``logprob_fn=None`` drops the penalty.
    """
    M = model.dim
    if M > 3:
        raise ValueError("grid search is limited to M <= 3")
    center = model.project(model.ml_joint(x, y, m))
    hw = half_width / np.sqrt(np.diag(model.fim_joint(center, m)))

    def psll(t):
        val = model.loglik_joint(x, y, m, t)
        if logprob_fn is not None:
            val -= logprob_fn(t)
        return val

    best_val = psll(center)
    offsets = np.linspace(-1.0, 1.0, points)
    for _ in range(levels):
        axes = [center[k] + hw[k] * offsets for k in range(M)]
        for pt in np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, M):
            pt = model.project(pt)
            val = psll(pt)
            if val > best_val:
                best_val, center = val, pt
        hw = hw / shrink
    return center
