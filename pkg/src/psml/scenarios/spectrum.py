"""Gaussian-variance (energy detection) channels with minimum-energy selection.

Each channel ``k`` delivers zero-mean Gaussian samples with variance
``theta_k``, the composite of faded signal power and noise. First stage:
``n_x`` samples per channel. Second stage: ``n_y`` samples from the selected
channel. The selection rule picks the channel with the least measured energy.
"""

from __future__ import annotations

import numpy as np

from .. import special
from ..core import ScenarioModel

FLOOR = 1e-9


def spectrum_pairwise_prob(theta, m: int, mt: int, N: int) -> float:
    """``Pr(energy_m <= energy_mt) = F_cdf(theta_mt / theta_m; N, N)``."""
    return special.f_cdf(theta[mt] / theta[m], N, N)


def spectrum_pairwise_grad(theta, m: int, mt: int, N: int) -> np.ndarray:
    """Gradient of ``log F_cdf(zeta)`` with ``zeta = theta_mt / theta_m``."""
    if m == mt:
        raise ValueError("pairwise comparison needs m != mt")
    zeta = theta[mt] / theta[m]
    scale = special.f_pdf(zeta, N, N) / (theta[m] * special.f_cdf(zeta, N, N))
    g = np.zeros(len(theta))
    g[mt] = scale
    g[m] = -scale * zeta
    return g


class SpectrumModel(ScenarioModel):
    """``M`` channels observed through zero-mean Gaussian samples of variance ``theta``."""

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
        if np.any(theta <= 0):
            raise ValueError("channel variances must be positive")
        return theta

    def project(self, theta):
        return np.maximum(theta, FLOOR)

    def _counts(self, m: int):
        N = np.full(self.M, self.n_x)
        N[m] += self.n_y
        return N

    # -- sampling ---------------------------------------------------------
    def sample_first_stage(self, theta, rng):
        return rng.standard_normal((self.n_x, self.M)) * np.sqrt(theta)

    def sample_second_stage(self, theta, m, rng):
        return rng.standard_normal(self.n_y) * np.sqrt(theta[m])

    def sample_ml_x(self, theta, K, rng):
        return np.asarray(theta) * rng.chisquare(self.n_x, size=(K, self.M)) / self.n_x

    # -- likelihood -------------------------------------------------------
    @staticmethod
    def _ll(s, n, theta):
        return -0.5 * n * np.log(2.0 * np.pi * theta) - 0.5 * s / theta

    @staticmethod
    def _score(s, n, theta):
        return (s - n * theta) / (2.0 * theta * theta)

    def loglik_x(self, x, theta):
        s = np.sum(np.square(x), axis=0)
        return float(np.sum(self._ll(s, self.n_x, np.asarray(theta, dtype=float))))

    def grad_loglik_x(self, x, theta):
        s = np.sum(np.square(x), axis=0)
        return self._score(s, self.n_x, np.asarray(theta, dtype=float))

    def loglik_y(self, y, m, theta):
        if self.n_y == 0:
            return 0.0
        return float(self._ll(np.sum(np.square(y)), self.n_y, theta[m]))

    def grad_loglik_y(self, y, m, theta):
        g = np.zeros(self.M)
        if self.n_y > 0:
            g[m] = self._score(np.sum(np.square(y)), self.n_y, theta[m])
        return g

    def score_x_from_ml(self, xhat, theta):
        return self._score(np.asarray(xhat) * self.n_x, self.n_x, np.asarray(theta, dtype=float))

    # -- Fisher information ---------------------------------------------
    def fim_x(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.diag(self.n_x / (2.0 * theta**2))

    def fim_y(self, theta, m):
        J = np.zeros((self.M, self.M))
        J[m, m] = self.n_y / (2.0 * theta[m] ** 2)
        return J

    def fim_joint_inv(self, theta, m):
        theta = np.asarray(theta, dtype=float)
        return np.diag(2.0 * theta**2 / self._counts(m))

    # -- ML estimators ------------------------------------------------------
    def ml_x(self, x):
        return np.mean(np.square(x), axis=0)

    def ml_y(self, y, m):
        est = np.full(self.M, np.nan)
        if self.n_y > 0:
            est[m] = np.mean(np.square(y))
        return est

    def _energy_totals(self, x, y, m):
        s = np.sum(np.square(x), axis=0)
        s[m] += np.sum(np.square(y))
        return s

    def ml_joint(self, x, y, m):
        return self._energy_totals(x, y, m) / self._counts(m)

    def score_solve(self, x, y, m, g):
        # per coordinate: (s - N t) / (2 t^2) = g  <=>  2 g t^2 + N t - s = 0
        s = self._energy_totals(x, y, m)
        N = self._counts(m).astype(float)
        g = np.asarray(g, dtype=float)
        disc = N * N + 8.0 * g * s
        if np.any(disc < 0):
            bad = np.flatnonzero(disc < 0).tolist()
            raise ArithmeticError(f"score equation has no positive root for coordinates {bad}")
        return 2.0 * s / (N + np.sqrt(disc))

    # -- selection probabilities ------------------------------------------
    def pairwise_prob(self, theta, m, mt):
        return spectrum_pairwise_prob(theta, m, mt, self.n_x)

    def pairwise_grad(self, theta, m, mt):
        return spectrum_pairwise_grad(theta, m, mt, self.n_x)

    def selection_logprob(self, theta, m):
        if self.M == 2:
            return float(np.log(self.pairwise_prob(theta, m, 1 - m)))
        return super().selection_logprob(theta, m)

    def selection_grad(self, theta, m):
        if self.M == 2:
            return self.pairwise_grad(theta, m, 1 - m)
        return super().selection_grad(theta, m)
