"""Independent Bernoulli populations with largest-success-rate selection.

First stage: ``n_x`` draws from every population. Second stage: ``n_y`` more
draws from the selected population only. Data are stored as 0/1 arrays,
``x`` of shape ``(n_x, M)`` and ``y`` of shape ``(n_y,)``.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .. import special
from ..core import ScenarioModel

EPS = 1e-6


def xi(n, N: int, theta: float):
    """Centered count ``(n - N theta) / (theta (1 - theta))``."""
    return (np.asarray(n, dtype=float) - N * theta) / (theta * (1.0 - theta))


def _pair_tables(N: int, tm: float, tt: float):
    pm = special.binom_pmf_vector(N, tm)
    pt = special.binom_pmf_vector(N, tt)
    n = np.arange(N + 1)
    return n, pm, pt


def bernoulli_pairwise_prob(theta, m: int, mt: int, N: int) -> float:
    """``Pr(S_m >= S_mt)`` for independent ``Binomial(N, .)`` counts.

    Ties count in favour of ``m``, so ``p(m, mt) + p(mt, m) = 1 + Pr(tie)``.
    """
    _, pm, pt = _pair_tables(N, theta[m], theta[mt])
    return float(np.dot(pm, np.cumsum(pt)))


def bernoulli_pairwise_grad(theta, m: int, mt: int, N: int) -> np.ndarray:
    """Gradient of ``log Pr(S_m >= S_mt)``, via the double binomial sum."""
    if m == mt:
        raise ValueError("pairwise comparison needs m != mt")
    tm, tt = theta[m], theta[mt]
    n, pm, pt = _pair_tables(N, tm, tt)
    cdf_t = np.cumsum(pt)
    P = np.dot(pm, cdf_t)
    g = np.zeros(len(theta))
    g[m] = np.dot(xi(n, N, tm) * pm, cdf_t) / P
    g[mt] = np.dot(pm, np.cumsum(xi(n, N, tt) * pt)) / P
    return g


def _strict_prob_and_grad(theta, m: int, mt: int, N: int):
    # Pr(S_m > S_mt) and its log-gradient
    tm, tt = theta[m], theta[mt]
    n, pm, pt = _pair_tables(N, tm, tt)
    cdf_t = np.concatenate(([0.0], np.cumsum(pt)[:-1]))
    dcdf_t = np.concatenate(([0.0], np.cumsum(xi(n, N, tt) * pt)[:-1]))
    P = np.dot(pm, cdf_t)
    g = np.zeros(len(theta))
    g[m] = np.dot(xi(n, N, tm) * pm, cdf_t) / P
    g[mt] = np.dot(pm, dcdf_t) / P
    return P, g


class BernoulliModel(ScenarioModel):
    """``M`` independent Bernoulli populations, success rates in (0, 1)."""

    diagonal_fim = True

    def __init__(self, M: int, n_x: int, n_y: int):
        if M < 1 or n_x < 1 or n_y < 0:
            raise ValueError("need M >= 1, n_x >= 1, n_y >= 0")
        self.M = int(M)
        self.n_x = int(n_x)
        self.n_y = int(n_y)

    @property
    def dim(self):
        return self.M

    def check_theta(self, theta):
        theta = super().check_theta(theta)
        if np.any(theta <= 0) or np.any(theta >= 1):
            raise ValueError("Bernoulli parameters must lie strictly inside (0, 1)")
        return theta

    def project(self, theta):
        return np.clip(theta, EPS, 1.0 - EPS)

    def _counts(self, m: int):
        N = np.full(self.M, self.n_x)
        N[m] += self.n_y
        return N

    # -- sampling ---------------------------------------------------------
    def sample_first_stage(self, theta, rng):
        return (rng.random((self.n_x, self.M)) < theta).astype(np.int8)

    def sample_second_stage(self, theta, m, rng):
        return (rng.random(self.n_y) < theta[m]).astype(np.int8)

    @cached_property
    def _log_choose_x(self) -> np.ndarray:
        return special.binom_logpmf(np.arange(self.n_x + 1), self.n_x, 0.5) + self.n_x * np.log(2.0)

    def sample_ml_x(self, theta, K, rng):
        # inverse-cdf draws of the success counts; faster than
        # Generator.binomial with a different probability per column
        theta = np.asarray(theta, dtype=float)
        n = np.arange(self.n_x + 1)
        logp = (self._log_choose_x + np.outer(np.log(theta), n)
                + np.outer(np.log1p(-theta), self.n_x - n))
        cdf = np.cumsum(np.exp(logp), axis=1)
        cdf /= cdf[:, -1:]
        u = rng.random((self.M, K))
        counts = np.empty((self.M, K))
        for k in range(self.M):
            counts[k] = np.searchsorted(cdf[k], u[k], side="right")
        return np.minimum(counts.T, self.n_x) / self.n_x

    # -- likelihood -------------------------------------------------------
    @staticmethod
    def _ll(s, n, theta):
        return s * np.log(theta) + (n - s) * np.log1p(-theta)

    def loglik_x(self, x, theta):
        s = np.asarray(x).sum(axis=0)
        return float(np.sum(self._ll(s, self.n_x, theta)))

    def grad_loglik_x(self, x, theta):
        s = np.asarray(x).sum(axis=0)
        return xi(s, self.n_x, np.asarray(theta, dtype=float))

    def loglik_y(self, y, m, theta):
        if self.n_y == 0:
            return 0.0
        return float(self._ll(np.sum(y), self.n_y, theta[m]))

    def grad_loglik_y(self, y, m, theta):
        g = np.zeros(self.M)
        if self.n_y > 0:
            g[m] = xi(np.sum(y), self.n_y, theta[m])
        return g

    def score_x_from_ml(self, xhat, theta):
        return xi(np.asarray(xhat) * self.n_x, self.n_x, np.asarray(theta, dtype=float))

    # -- Fisher information ---------------------------------------------
    def fim_x(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.diag(self.n_x / (theta * (1.0 - theta)))

    def fim_y(self, theta, m):
        J = np.zeros((self.M, self.M))
        J[m, m] = self.n_y / (theta[m] * (1.0 - theta[m]))
        return J

    def fim_joint_inv(self, theta, m):
        theta = np.asarray(theta, dtype=float)
        return np.diag(theta * (1.0 - theta) / self._counts(m))

    # -- ML estimators ------------------------------------------------------
    def ml_x(self, x):
        return np.asarray(x).mean(axis=0, dtype=float)

    def ml_y(self, y, m):
        est = np.full(self.M, np.nan)
        if self.n_y > 0:
            est[m] = np.mean(y)
        return est

    def _success_totals(self, x, y, m):
        c = np.asarray(x).sum(axis=0).astype(float)
        c[m] += np.sum(y)
        return c

    def ml_joint(self, x, y, m):
        return self._success_totals(x, y, m) / self._counts(m)

    def score_solve(self, x, y, m, g):
        # per coordinate: (c - N t) / (t (1 - t)) = g  <=>  g t^2 - (g + N) t + c = 0
        c = self._success_totals(x, y, m)
        N = self._counts(m).astype(float)
        g = np.asarray(g, dtype=float)
        b = g + N
        disc = b * b - 4.0 * g * c
        return 2.0 * c / (b + np.sqrt(np.maximum(disc, 0.0)))

    # -- selection probabilities ------------------------------------------
    def pairwise_prob(self, theta, m, mt):
        return bernoulli_pairwise_prob(theta, m, mt, self.n_x)

    def pairwise_grad(self, theta, m, mt):
        return bernoulli_pairwise_grad(theta, m, mt, self.n_x)

    def selection_logprob(self, theta, m):
        if self.M == 2:
            # argmax with ties to index 0
            if m == 0:
                return float(np.log(self.pairwise_prob(theta, 0, 1)))
            return float(np.log(_strict_prob_and_grad(theta, 1, 0, self.n_x)[0]))
        return super().selection_logprob(theta, m)

    def selection_grad(self, theta, m):
        if self.M == 2:
            if m == 0:
                return self.pairwise_grad(theta, 0, 1)
            return _strict_prob_and_grad(theta, 1, 0, self.n_x)[1]
        return super().selection_grad(theta, m)
