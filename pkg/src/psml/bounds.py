"""Post-selection Fisher information and the Psi-CRB.

The post-selection FIM for index ``m`` is the conditional covariance of the
first-stage score given ``Psi = m`` plus the second-stage FIM. The bound is
``sum_m Pr(Psi = m) [J^(m)^{-1}]_{mm}``, estimated here by Monte Carlo.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import special
from .core import ScenarioModel, SelectionRule
from .sa import SaConfig, draw_selections

COND_LIMIT = 1e12


@dataclass
class PsfimEstimate:
    J_hat: np.ndarray
    m: int
    K: int
    hit_count: int
    valid: bool = True
    reason: str = ""


@dataclass
class PsiCrb:
    value: float
    freqs: np.ndarray
    terms: np.ndarray
    flagged: list = field(default_factory=list)


def _psfim_from_draws(model: ScenarioModel, theta, m: int, scores, sel, K: int) -> PsfimEstimate:
    hits = sel == m
    n = int(np.count_nonzero(hits))
    J_y = model.fim_y(theta, m)
    if n == 0:
        return PsfimEstimate(np.full_like(J_y, np.nan), m, K, 0, valid=False,
                             reason="no draws selected this index")
    s = scores[hits]
    g = s.mean(axis=0)
    J_x = s.T @ s / n - np.outer(g, g)
    J = J_x + J_y
    J = 0.5 * (J + J.T)
    est = PsfimEstimate(J, m, K, n)
    eig = np.linalg.eigvalsh(J)
    if eig[0] <= 0 or eig[-1] / eig[0] > COND_LIMIT:
        est.valid = False
        est.reason = f"ill-conditioned estimate ({n} hits)"
    return est


def sa_psfim(model: ScenarioModel, rule: SelectionRule, theta, m: int, cfg: SaConfig,
             rng: np.random.Generator) -> PsfimEstimate:
    """Empirical post-selection FIM for index ``m`` from ``cfg.K`` draws."""
    theta = np.asarray(theta, dtype=float)
    xhat, sel = draw_selections(model, rule, theta, cfg.K, rng)
    scores = model.score_x_from_ml(xhat, theta)
    return _psfim_from_draws(model, theta, m, scores, sel, cfg.K)


def empirical_psi_crb(model: ScenarioModel, rule: SelectionRule, theta, cfg: SaConfig,
                      rng: np.random.Generator) -> PsiCrb:
    """Monte Carlo Psi-CRB.

    One batch of ``cfg.K`` draws supplies both the selection frequencies and
    every per-index PSFIM. Indices never selected contribute zero; indices
    whose PSFIM is singular are listed in ``flagged`` and contribute zero.
    """
    theta = np.asarray(theta, dtype=float)
    M = model.dim
    xhat, sel = draw_selections(model, rule, theta, cfg.K, rng)
    scores = model.score_x_from_ml(xhat, theta)
    freqs = np.bincount(sel, minlength=M) / cfg.K
    terms = np.zeros(M)
    flagged = []
    for m in np.flatnonzero(freqs):
        est = _psfim_from_draws(model, theta, int(m), scores, sel, cfg.K)
        if not est.valid:
            flagged.append(int(m))
            continue
        terms[m] = np.linalg.inv(est.J_hat)[m, m]
    return PsiCrb(float(np.dot(freqs, terms)), freqs, terms, flagged)


def analytic_psi_crb_gaussian2(model, theta, limit: float = 12.0) -> float:
    """Psi-CRB for a two-parameter linear Gaussian model by quadrature.

    In whitened coordinates ``z`` (first-stage estimate ``theta + L z`` with
    ``L L' = J_x^{-1}``) the score is ``J_x L z`` and the selection boundary
    is a line. Rotating so the boundary is axis aligned turns each
    conditional moment into an integral over a half plane.
    """
    if model.dim != 2:
        raise ValueError("quadrature oracle is for M = 2")
    theta = np.asarray(theta, dtype=float)
    L = np.linalg.cholesky(model.J_x_inv)
    B = model.J_x @ L  # score = B z
    a = L.T @ np.array([1.0, -1.0])  # x0 - x1 - (t0 - t1) = a' z
    an = np.linalg.norm(a)
    R = np.column_stack([a / an, [-a[1] / an, a[0] / an]])  # z = R u
    c = float(np.clip(-(theta[0] - theta[1]) / an, -limit, limit))  # index 0 iff u1 >= c
    BR = B @ R

    def phi2(u2, u1):
        return np.exp(-0.5 * (u1 * u1 + u2 * u2)) / (2.0 * np.pi)

    def moments(lo, hi):
        def q(f):
            val, _ = integrate.dblquad(lambda u2, u1: f(u1, u2) * phi2(u2, u1), lo, hi,
                                       -limit, limit, epsabs=1e-12, epsrel=1e-10)
            return val

        p = q(lambda u1, u2: 1.0)
        mean = np.array([q(lambda u1, u2, i=i: (BR[i] @ (u1, u2))) for i in range(2)]) / p
        second = np.empty((2, 2))
        for i in range(2):
            for j in range(i, 2):
                second[i, j] = second[j, i] = q(
                    lambda u1, u2, i=i, j=j: (BR[i] @ (u1, u2)) * (BR[j] @ (u1, u2))) / p
        return p, second - np.outer(mean, mean)

    total = 0.0
    for m, (lo, hi) in enumerate([(c, limit), (-limit, c)]):
        if hi - lo <= 0 or (special.norm_cdf(hi) - special.norm_cdf(lo)) < 1e-300:
            continue  # this index is never selected
        p, cov = moments(lo, hi)
        J = cov + model.fim_y(theta, m)
        total += p * np.linalg.inv(J)[m, m]
    return total
