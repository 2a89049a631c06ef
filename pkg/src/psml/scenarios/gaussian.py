"""Correlated linear Gaussian populations.

    x_n = H_x theta + w_n,       n = 1..n_x,   w_n ~ N(0, cov_w)
    y_n = H_y[m] theta + v_n,    n = 1..n_y,   v_n ~ N(0, cov_v)

The selection picks the largest coordinate of the first-stage ML estimate.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .. import special
from ..core import ScenarioModel


def inverse_square_cov(M: int) -> np.ndarray:
    """Covariance with entries ``(1 + |i - j|)^-2``."""
    idx = np.arange(M)
    return 1.0 / (1.0 + np.abs(idx[:, None] - idx[None, :])) ** 2


def _check_spd(name: str, A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
        raise ValueError(f"{name} must be a symmetric square matrix")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} must be positive definite") from exc
    return A


def gaussian_pairwise_scale(J_x_inv: np.ndarray, m: int, mt: int) -> float:
    """``sqrt((e_m - e_mt)^T J_x^{-1} (e_m - e_mt))``."""
    if m == mt:
        raise ValueError("pairwise comparison needs m != mt")
    return float(np.sqrt(J_x_inv[m, m] + J_x_inv[mt, mt] - 2.0 * J_x_inv[m, mt]))


def gaussian_pairwise_prob(theta, m: int, mt: int, J_x_inv: np.ndarray) -> float:
    """``Pr(ml_x[m] >= ml_x[mt]) = Phi(Delta^T theta)``."""
    s = gaussian_pairwise_scale(J_x_inv, m, mt)
    return special.norm_cdf((theta[m] - theta[mt]) / s)


def gaussian_pairwise_grad(theta, m: int, mt: int, J_x_inv: np.ndarray) -> np.ndarray:
    """Gradient of ``log Phi(Delta^T theta)``: ``phi/Phi * Delta``.

    ``Delta`` carries the ``1/s`` normalisation, so the result is the inverse
    Mills ratio times ``(e_m - e_mt) / s``.
    """
    s = gaussian_pairwise_scale(J_x_inv, m, mt)
    r = special.mills_ratio((theta[m] - theta[mt]) / s)
    g = np.zeros(len(theta))
    g[m] = r / s
    g[mt] = -r / s
    return g


class LinearGaussianModel(ScenarioModel):
    """Linear Gaussian two-stage model with known designs and covariances.

    ``H_y`` is either one matrix used for every selection or a sequence of
    ``M`` matrices indexed by the selection.
    """

    def __init__(self, H_x, H_y, cov_w, cov_v, n_x: int, n_y: int):
        H_x = np.atleast_2d(np.asarray(H_x, dtype=float))
        M = H_x.shape[1]
        if np.linalg.matrix_rank(H_x) < M:
            raise ValueError("H_x must have full column rank")
        H_y = np.asarray(H_y, dtype=float)
        if H_y.ndim == 2:
            H_y = np.broadcast_to(H_y, (M,) + H_y.shape)
        if H_y.ndim != 3 or H_y.shape[0] != M or H_y.shape[2] != M:
            raise ValueError("H_y must be one K_y x M matrix or M of them")
        if n_x < 1 or n_y < 0:
            raise ValueError("need n_x >= 1 and n_y >= 0")
        self.H_x = H_x
        self.H_y = np.array(H_y)
        self.cov_w = _check_spd("cov_w", cov_w)
        self.cov_v = _check_spd("cov_v", cov_v)
        if self.cov_w.shape[0] != H_x.shape[0] or self.cov_v.shape[0] != self.H_y.shape[1]:
            raise ValueError("covariance sizes do not match the design matrices")
        self.n_x = int(n_x)
        self.n_y = int(n_y)
        self._M = M
        self._chol_w = np.linalg.cholesky(self.cov_w)
        self._chol_v = np.linalg.cholesky(self.cov_v)
        self._prec_w = np.linalg.inv(self.cov_w)
        self._prec_v = np.linalg.inv(self.cov_v)
        self._logdet_w = float(np.linalg.slogdet(self.cov_w)[1])
        self._logdet_v = float(np.linalg.slogdet(self.cov_v)[1])
        self._A_x = H_x.T @ self._prec_w @ H_x
        self._A_x_inv = np.linalg.inv(self._A_x)
        self._joint_inv: dict[int, np.ndarray] = {}
        # with one shared second-stage design the joint FIM does not depend on m
        self._shared_y = bool(np.all(self.H_y == self.H_y[0]))

    @classmethod
    def identity(cls, M: int, n_x: int, n_y: int, cov=None) -> "LinearGaussianModel":
        """``H_x = H_y = I`` with a shared noise covariance (identity by default)."""
        cov = np.eye(M) if cov is None else cov
        return cls(np.eye(M), np.eye(M), cov, cov, n_x, n_y)

    @property
    def dim(self):
        return self._M

    @cached_property
    def J_x(self) -> np.ndarray:
        return self.n_x * self._A_x

    @cached_property
    def J_x_inv(self) -> np.ndarray:
        return self._A_x_inv / self.n_x

    @cached_property
    def _chol_J_x_inv(self) -> np.ndarray:
        return np.linalg.cholesky(self.J_x_inv)

    def _A_y(self, m: int) -> np.ndarray:
        H = self.H_y[m]
        return H.T @ self._prec_v @ H

    # -- sampling ---------------------------------------------------------
    def sample_first_stage(self, theta, rng):
        mean = self.H_x @ theta
        z = rng.standard_normal((self.n_x, len(mean)))
        return mean + z @ self._chol_w.T

    def sample_second_stage(self, theta, m, rng):
        mean = self.H_y[m] @ theta
        z = rng.standard_normal((self.n_y, len(mean)))
        return mean + z @ self._chol_v.T

    def sample_ml_x(self, theta, K, rng):
        z = rng.standard_normal((K, self._M))
        return np.asarray(theta, dtype=float) + z @ self._chol_J_x_inv.T

    # -- likelihood -------------------------------------------------------
    @staticmethod
    def _gauss_loglik(data, mean, prec, logdet):
        r = np.atleast_2d(data) - mean
        n, k = r.shape
        quad = np.einsum("ni,ij,nj->", r, prec, r)
        return float(-0.5 * quad - 0.5 * n * (k * np.log(2 * np.pi) + logdet))

    def loglik_x(self, x, theta):
        return self._gauss_loglik(x, self.H_x @ theta, self._prec_w, self._logdet_w)

    def grad_loglik_x(self, x, theta):
        r = np.atleast_2d(x) - self.H_x @ theta
        return self.H_x.T @ self._prec_w @ r.sum(axis=0)

    def loglik_y(self, y, m, theta):
        if self.n_y == 0:
            return 0.0
        return self._gauss_loglik(y, self.H_y[m] @ theta, self._prec_v, self._logdet_v)

    def grad_loglik_y(self, y, m, theta):
        if self.n_y == 0:
            return np.zeros(self._M)
        r = np.atleast_2d(y) - self.H_y[m] @ theta
        return self.H_y[m].T @ self._prec_v @ r.sum(axis=0)

    def score_x_from_ml(self, xhat, theta):
        return (np.asarray(xhat) - theta) @ self.J_x

    # -- Fisher information ---------------------------------------------
    def fim_x(self, theta=None):
        return self.J_x.copy()

    def fim_y(self, theta, m):
        return self.n_y * self._A_y(m)

    def fim_joint_inv(self, theta, m):
        key = 0 if self._shared_y else m
        inv = self._joint_inv.get(key)
        if inv is None:
            inv = np.linalg.inv(self.fim_joint(theta, m))
            self._joint_inv[key] = inv
        return inv

    # -- ML estimators ------------------------------------------------------
    def ml_x(self, x):
        xbar = np.atleast_2d(x).mean(axis=0)
        return self._A_x_inv @ (self.H_x.T @ (self._prec_w @ xbar))

    def ml_y(self, y, m):
        H = self.H_y[m]
        ybar = np.atleast_2d(y).mean(axis=0)
        W = H.T @ self._prec_v
        A = W @ H
        if np.linalg.matrix_rank(A) == self._M:
            return np.linalg.solve(A, W @ ybar)
        # minimum-norm solution; keep only coordinates in the row space of H
        est = np.linalg.pinv(A) @ (W @ ybar)
        proj = np.linalg.pinv(H) @ H
        identified = np.isclose(np.diag(proj), 1.0, atol=1e-9)
        return np.where(identified, est, np.nan)

    def ml_joint(self, x, y, m):
        xbar = np.atleast_2d(x).mean(axis=0)
        rhs = self.n_x * (self.H_x.T @ (self._prec_w @ xbar))
        if self.n_y > 0:
            ybar = np.atleast_2d(y).mean(axis=0)
            rhs = rhs + self.n_y * (self.H_y[m].T @ (self._prec_v @ ybar))
        return self.fim_joint_inv(None, m) @ rhs

    def score_solve(self, x, y, m, g):
        # the log-likelihood is quadratic, so J (theta_ML - theta) = g is exact
        return self.ml_joint(x, y, m) - self.fim_joint_inv(None, m) @ g

    # -- selection probabilities ------------------------------------------
    def pairwise_prob(self, theta, m, mt):
        return gaussian_pairwise_prob(theta, m, mt, self.J_x_inv)

    def pairwise_logprob(self, theta, m, mt):
        s = gaussian_pairwise_scale(self.J_x_inv, m, mt)
        return special.log_norm_cdf((theta[m] - theta[mt]) / s)

    def pairwise_grad(self, theta, m, mt):
        return gaussian_pairwise_grad(theta, m, mt, self.J_x_inv)

    def selection_logprob(self, theta, m):
        if self._M == 2:
            return self.pairwise_logprob(theta, m, 1 - m)
        return super().selection_logprob(theta, m)

    def selection_grad(self, theta, m):
        if self._M == 2:
            return self.pairwise_grad(theta, m, 1 - m)
        return super().selection_grad(theta, m)
