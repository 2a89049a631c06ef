"""Two-stage estimation after parameter selection: models, rules, metrics.

Indices are zero-based throughout. Selection rules act on the first-stage
ML estimate ``ml_x(x)``, which is the summary every rule in this package
consumes (argmax/argmin of population means, kNN on the estimate vector).
"""

from __future__ import annotations

import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np


class SelectionRule(ABC):
    """Deterministic map from the first-stage estimate to a parameter index."""

    supports_second_best: bool = False

    @abstractmethod
    def select(self, xhat: np.ndarray) -> int:
        ...

    def select_many(self, xhats: np.ndarray) -> np.ndarray:
        return np.array([self.select(row) for row in xhats], dtype=np.intp)

    def second_best(self, xhat: np.ndarray) -> int:
        raise NotImplementedError(f"{type(self).__name__} has no second-best query")


class ArgmaxRule(SelectionRule):
    """Largest first-stage estimate; ties go to the smallest index."""

    supports_second_best = True

    def select(self, xhat):
        return int(np.argmax(xhat))

    def select_many(self, xhats):
        return np.argmax(xhats, axis=1)

    def second_best(self, xhat):
        masked = np.array(xhat, dtype=float)
        masked[self.select(masked)] = -np.inf
        return int(np.argmax(masked))


class ArgminRule(SelectionRule):
    """Smallest first-stage estimate (minimum-energy channel selection)."""

    supports_second_best = True

    def select(self, xhat):
        return int(np.argmin(xhat))

    def select_many(self, xhats):
        return np.argmin(xhats, axis=1)

    def second_best(self, xhat):
        masked = np.array(xhat, dtype=float)
        masked[self.select(masked)] = np.inf
        return int(np.argmin(masked))


class ConstantRule(SelectionRule):
    """Always selects ``index``, ignoring the data."""

    def __init__(self, index: int):
        self.index = int(index)

    def select(self, xhat):
        return self.index

    def select_many(self, xhats):
        return np.full(len(xhats), self.index, dtype=np.intp)


class RandomizedRule(SelectionRule):
    """Data-independent randomized selection with fixed probabilities.

    The draw is a hash of the data bytes, so the rule is still a deterministic
    function of its input while its law does not depend on the parameter.
    That holds for continuous data only; with discrete data (Bernoulli counts)
    the hash is a fixed function of a few support points and the selection
    carries information about theta.
    """

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 1 or np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
            raise ValueError("probs must be a probability vector")
        self.cdf = np.cumsum(probs)
        self.cdf[-1] = 1.0

    def select(self, xhat):
        u = zlib.crc32(np.ascontiguousarray(xhat, dtype=float).tobytes()) / 2.0**32
        return int(np.searchsorted(self.cdf, u, side="right"))


@dataclass(frozen=True)
class TwoStageSample:
    """One realization of the two-stage experiment.

    ``m`` is always the rule applied to ``x``; use :func:`draw_sample`.
    """

    x: np.ndarray
    m: int
    y: np.ndarray
    n_x: int
    n_y: int
    # independent populations: every FIM is diagonal
    diagonal_fim: bool = False


class ScenarioModel(ABC):
    """Behavioral interface shared by every two-stage observation model.

    Subclasses fix the per-stage repetition counts ``n_x`` and ``n_y`` at
    construction and are treated as immutable afterwards.
    """

    n_x: int
    n_y: int

    @property
    @abstractmethod
    def dim(self) -> int:
        ...

    # -- parameter domain -------------------------------------------------
    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"theta must have shape ({self.dim},), got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta entries must be finite")
        return theta

    def project(self, theta: np.ndarray) -> np.ndarray:
        """Map an iterate back into the parameter domain."""
        return theta

    # -- sampling ---------------------------------------------------------
    @abstractmethod
    def sample_first_stage(self, theta, rng: np.random.Generator) -> np.ndarray:
        ...

    @abstractmethod
    def sample_second_stage(self, theta, m: int, rng: np.random.Generator) -> np.ndarray:
        ...

    @abstractmethod
    def sample_ml_x(self, theta, K: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``K`` first-stage ML estimates from their exact sampling law."""

    # -- likelihood -------------------------------------------------------
    @abstractmethod
    def loglik_x(self, x, theta) -> float:
        ...

    @abstractmethod
    def grad_loglik_x(self, x, theta) -> np.ndarray:
        ...

    @abstractmethod
    def loglik_y(self, y, m: int, theta) -> float:
        ...

    @abstractmethod
    def grad_loglik_y(self, y, m: int, theta) -> np.ndarray:
        ...

    def loglik_joint(self, x, y, m: int, theta) -> float:
        return self.loglik_x(x, theta) + self.loglik_y(y, m, theta)

    def grad_loglik_joint(self, x, y, m: int, theta) -> np.ndarray:
        return self.grad_loglik_x(x, theta) + self.grad_loglik_y(y, m, theta)

    @abstractmethod
    def score_x_from_ml(self, xhat: np.ndarray, theta) -> np.ndarray:
        """``grad log f_x`` written through the first-stage estimate (row-wise)."""

    # -- Fisher information -------------------------------------------------
    @abstractmethod
    def fim_x(self, theta) -> np.ndarray:
        ...

    @abstractmethod
    def fim_y(self, theta, m: int) -> np.ndarray:
        ...

    def fim_joint(self, theta, m: int) -> np.ndarray:
        return self.fim_x(theta) + self.fim_y(theta, m)

    def fim_joint_inv(self, theta, m: int) -> np.ndarray:
        return np.linalg.inv(self.fim_joint(theta, m))

    # -- ML estimators ------------------------------------------------------
    @abstractmethod
    def ml_x(self, x) -> np.ndarray:
        ...

    @abstractmethod
    def ml_y(self, y, m: int) -> np.ndarray:
        """Second-stage-only ML; NaN where a coordinate is not identified by ``y``."""

    @abstractmethod
    def ml_joint(self, x, y, m: int) -> np.ndarray:
        ...

    def score_solve(self, x, y, m: int, g: np.ndarray) -> np.ndarray:
        """Solve ``grad loglik_joint(theta) = g`` for theta."""
        raise NotImplementedError(f"{type(self).__name__} has no closed-form score solve")

    # -- selection probabilities ----------------------------------------
    def pairwise_prob(self, theta, m: int, mt: int) -> float:
        raise NotImplementedError(f"{type(self).__name__} has no closed-form pairwise probability")

    def pairwise_grad(self, theta, m: int, mt: int) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no closed-form pairwise gradient")

    def selection_logprob(self, theta, m: int) -> float:
        """Exact ``log Pr(Psi = m; theta)``; available for M <= 2."""
        if self.dim == 1:
            return 0.0
        raise NotImplementedError("exact selection probability is only available for M <= 2")

    def selection_grad(self, theta, m: int) -> np.ndarray:
        """Exact ``grad log Pr(Psi = m; theta)``; available for M <= 2."""
        if self.dim == 1:
            return np.zeros(1)
        raise NotImplementedError("exact selection gradient is only available for M <= 2")


def draw_sample(model: ScenarioModel, rule: SelectionRule, theta, rng: np.random.Generator) -> TwoStageSample:
    """Run one two-stage experiment: draw ``x``, select, then draw ``y``."""
    theta = model.check_theta(theta)
    x = model.sample_first_stage(theta, rng)
    m = rule.select(model.ml_x(x))
    y = model.sample_second_stage(theta, m, rng)
    return TwoStageSample(x=x, m=m, y=y, n_x=model.n_x, n_y=model.n_y)


# -- post-selection metrics ----------------------------------------------

def psse_cost(estimate, truth, m: int) -> float:
    """Squared error of the selected coordinate only."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError("estimate and truth must have the same length")
    if not 0 <= m < len(truth):
        raise IndexError(f"selection index {m} out of range for M={len(truth)}")
    return float((estimate[m] - truth[m]) ** 2)


def selected_errors(estimates, truths, selections) -> np.ndarray:
    """``estimate[m] - truth[m]`` per trial.

    ``truths`` may be a single vector shared by all trials.
    """
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    selections = np.asarray(selections, dtype=np.intp).reshape(-1)
    truths = np.asarray(truths, dtype=float)
    if truths.ndim == 1:
        truths = np.broadcast_to(truths, estimates.shape)
    if len(selections) == 0:
        raise ValueError("empty trial list")
    if len(selections) != len(estimates) or truths.shape != estimates.shape:
        raise ValueError("estimates, truths and selections disagree in length")
    if np.any(selections < 0) or np.any(selections >= estimates.shape[1]):
        raise IndexError("selection index out of range")
    rows = np.arange(len(selections))
    return estimates[rows, selections] - truths[rows, selections]


def empirical_psmse(estimates, truths, selections) -> float:
    """Monte Carlo PSMSE: mean selected-coordinate squared error."""
    err = selected_errors(estimates, truths, selections)
    return float(np.mean(err**2))


@dataclass
class PsiBias:
    """Aggregate and per-index empirical Psi-bias.

    ``aggregate`` is the signed mean of the selected-coordinate error, i.e.
    the selection-frequency-weighted sum of the conditional biases. Indices
    never selected have ``per_m`` equal to NaN and a zero count.
    """

    aggregate: float
    se: float
    per_m: np.ndarray
    counts: np.ndarray
    n: int = field(default=0)

    @property
    def absolute(self) -> float:
        return abs(self.aggregate)


def empirical_psi_bias(estimates, truths, selections, M: int | None = None) -> PsiBias:
    err = selected_errors(estimates, truths, selections)
    selections = np.asarray(selections, dtype=np.intp).reshape(-1)
    M = M or np.atleast_2d(estimates).shape[1]
    counts = np.bincount(selections, minlength=M)
    sums = np.bincount(selections, weights=err, minlength=M)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_m = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    n = len(err)
    se = float(np.std(err, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return PsiBias(aggregate=float(np.mean(err)), se=se, per_m=per_m, counts=counts, n=n)


def information_dominance_check(model: ScenarioModel, theta, m: int, g) -> float:
    """Induced 2-norm of ``J_xy(theta)^{-1} g g^T``.

    Values below one satisfy the information-dominance condition that
    guarantees MBP-PSML convergence at ``theta``.
    """
    g = np.asarray(g, dtype=float)
    J = model.fim_joint(theta, m)
    try:
        Jg = np.linalg.solve(J, g)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular Fisher information matrix") from exc
    # rank one: ||J^{-1} g g^T||_2 = ||J^{-1} g|| ||g||
    return float(np.linalg.norm(Jg) * np.linalg.norm(g))
