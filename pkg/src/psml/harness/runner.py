"""Monte Carlo experiment runner.

Every trial draws from its own generator, seeded by
``SeedSequence(seed, spawn_key=(point, stream, trial, ...))``. Trials are
spread over worker processes in contiguous chunks and reassembled in trial
order before any statistic is computed, so reports do not depend on the
worker count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .. import __version__
from ..bounds import empirical_psi_crb
from ..core import ArgmaxRule, ArgminRule, PsiBias, empirical_psi_bias, empirical_psmse, selected_errors
from ..estimators import (
    EstimationError,
    james_stein,
    ml_first,
    ml_joint,
    ml_split_y,
    psml,
    sa_psml,
    second_best_psml,
)
from ..sa import SaConfig
from ..scenarios import BernoulliModel, LinearGaussianModel, SpectrumModel, build_knn_rule, inverse_square_cov
from .config import ESTIMATORS, ConfigError, ExperimentConfig, config_to_ini

# spawn-key streams
_DATA, _ESTIMATOR, _CRB, _RULE = 0, 1, 2, 3


class FailureRateExceeded(RuntimeError):
    """An estimator failed on more trials than tolerated; ``report`` is partial."""

    def __init__(self, msg: str, report: "ExperimentReport"):
        super().__init__(msg)
        self.report = report


@dataclass
class ReportRow:
    sweep_var: str
    sweep_value: float
    estimator: str
    psi_bias: PsiBias | None
    psmse: float
    psmse_se: float
    runtime_ms: float | None
    fail_rate: float
    nonconverged_rate: float
    crb: float | None
    n_trials: int
    n_failed: int


@dataclass
class PointTrials:
    """Raw per-trial output at one sweep point.

    ``estimates[name]`` has one row per trial; ``failed[name]`` marks trials
    whose estimator raised (their rows are NaN and excluded from statistics).
    """

    theta: np.ndarray
    selections: np.ndarray
    estimates: dict
    failed: dict
    nonconverged: dict
    runtimes: dict

    def errors(self, name: str) -> np.ndarray:
        """Selected-coordinate error per trial, NaN where the estimator failed."""
        err = np.full(len(self.selections), np.nan)
        ok = ~self.failed[name]
        if ok.any():
            err[ok] = selected_errors(self.estimates[name][ok], self.theta, self.selections[ok])
        return err


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    points: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def row(self, point: int, estimator: str) -> ReportRow:
        return self.rows[point * len(self.config.estimators) + self.config.estimators.index(estimator)]

    def paired_difference(self, point: int, a: str, b: str):
        """Mean and standard error of ``err_a**2 - err_b**2`` over common trials."""
        trials = self.points[point]
        d = trials.errors(a) ** 2 - trials.errors(b) ** 2
        d = d[np.isfinite(d)]
        if len(d) < 2:
            return float("nan"), float("nan")
        return float(d.mean()), float(d.std(ddof=1) / math.sqrt(len(d)))


# -- per-point context -----------------------------------------------------------

@dataclass
class _Point:
    model: object
    rule: object
    theta: np.ndarray
    sa: SaConfig
    sweep_value: float


def _build_point(config: ExperimentConfig, point: int) -> _Point:
    s = config.point_setting(point)
    M, n_x, n_y = s["M"], s["n_x"], s["n_y"]
    try:
        if config.scenario == "linear-gaussian":
            cov = inverse_square_cov(M) if config.gaussian_cov == "inverse-square" else np.eye(M)
            model, rule = LinearGaussianModel.identity(M, n_x, n_y, cov), ArgmaxRule()
        elif config.scenario == "bernoulli":
            model, rule = BernoulliModel(M, n_x, n_y), ArgmaxRule()
        else:
            model, rule = SpectrumModel(M, n_x, n_y), ArgminRule()
        theta = model.check_theta(s["theta"])
    except ValueError as exc:
        raise ConfigError(f"sweep point {point}: {exc}") from exc
    if config.scenario == "spectrum-knn":
        rng = _rng(config, point, _RULE)
        rule = build_knn_rule(model, theta, size=config.knn_size, k=config.knn_k, rng=rng)
    return _Point(model, rule, theta, s["sa"], config.grid[point])


_POINT_CACHE: dict = {}


def _cached_point(config: ExperimentConfig, point: int) -> _Point:
    key = (config, point)
    if key not in _POINT_CACHE:
        _POINT_CACHE.clear()
        _POINT_CACHE[key] = _build_point(config, point)
    return _POINT_CACHE[key]


def _rng(config: ExperimentConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=key))


# -- one trial ----------------------------------------------------------------------

def _estimate(name: str, ctx: _Point, config: ExperimentConfig, x, y, m: int, rng):
    """Run one estimator; returns ``(estimate, converged)``."""
    model, rule = ctx.model, ctx.rule
    if name == "ml":
        return ml_joint(model, x, y, m), True
    if name == "ml-split":
        return ml_split_y(model, y, m), True
    if name == "ml-first":
        return ml_first(model, x), True
    if name == "james-stein":
        t = ml_joint(model, x, y, m)
        return james_stein(t, model.fim_joint(model.project(t.copy()), m)), True
    if name == "2b-psml":
        est, trace = second_best_psml(model, rule, x, y, config.est)
    elif name == "sa-psml":
        est, trace = sa_psml(model, rule, x, y, config.est, ctx.sa, rng)
    elif config.est.g_source == "analytic-full":
        est, trace = psml(model, x, y, m, config.est)
    elif config.est.g_source == "analytic-pairwise":
        est, trace = second_best_psml(model, rule, x, y, config.est)
    else:
        est, trace = sa_psml(model, rule, x, y, config.est, ctx.sa, rng)
    return est, trace.converged


def _run_trial(config: ExperimentConfig, ctx: _Point, point: int, trial: int, timed: bool):
    rng = _rng(config, point, _DATA, trial)
    model = ctx.model
    x = model.sample_first_stage(ctx.theta, rng)
    m = ctx.rule.select(model.ml_x(x))
    y = model.sample_second_stage(ctx.theta, m, rng)
    E = len(config.estimators)
    est = np.full((E, model.dim), np.nan)
    failed = np.zeros(E, dtype=bool)
    converged = np.ones(E, dtype=bool)
    runtime = np.zeros(E)
    for i, name in enumerate(config.estimators):
        # keyed by estimator name so adding estimators leaves the others unchanged
        erng = _rng(config, point, _ESTIMATOR, trial, ESTIMATORS.index(name))
        t0 = time.perf_counter() if timed else 0.0
        try:
            est[i], converged[i] = _estimate(name, ctx, config, x, y, m, erng)
        except (EstimationError, ArithmeticError, np.linalg.LinAlgError):
            failed[i] = True
        if timed:
            runtime[i] = time.perf_counter() - t0
    return m, est, failed, ~converged & ~failed, runtime


def _run_chunk(config: ExperimentConfig, point: int, start: int, stop: int, ctx: _Point | None = None):
    ctx = _cached_point(config, point) if ctx is None else ctx
    out = [_run_trial(config, ctx, point, t, config.timing) for t in range(start, stop)]
    return [np.array([o[k] for o in out]) for k in range(5)]


def _chunks(trials: int, workers: int):
    # several chunks per worker keeps the pool busy when trial costs vary
    n = min(trials, max(1, workers * 4))
    edges = np.linspace(0, trials, n + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


# -- experiment -------------------------------------------------------------------

def _summarize(config: ExperimentConfig, point: int, ctx: _Point, trials: PointTrials,
               crb: float | None) -> list:
    rows = []
    for name in config.estimators:
        failed = trials.failed[name]
        ok = ~failed
        n_ok = int(ok.sum())
        if n_ok:
            est, sel = trials.estimates[name][ok], trials.selections[ok]
            bias = empirical_psi_bias(est, ctx.theta, sel, M=ctx.model.dim)
            psmse = empirical_psmse(est, ctx.theta, sel)
            sq = selected_errors(est, ctx.theta, sel) ** 2
            psmse_se = float(sq.std(ddof=1) / math.sqrt(n_ok)) if n_ok > 1 else float("nan")
        else:
            bias, psmse, psmse_se = None, float("nan"), float("nan")
        runtime = float(trials.runtimes[name].mean() * 1e3) if config.timing else None
        rows.append(ReportRow(
            sweep_var=config.sweep, sweep_value=ctx.sweep_value, estimator=name, psi_bias=bias,
            psmse=psmse, psmse_se=psmse_se, runtime_ms=runtime,
            fail_rate=float(failed.mean()), nonconverged_rate=float(trials.nonconverged[name].mean()),
            crb=crb, n_trials=config.trials, n_failed=int(failed.sum()),
        ))
    return rows


def _warmup(config: ExperimentConfig, ctx: _Point, point: int):
    # discarded trials drawn from a stream the measured trials never use
    for t in range(config.warmup):
        _run_trial(config, ctx, point, config.trials + t, timed=False)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Run every sweep point; raises :class:`FailureRateExceeded` on a breach."""
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    report = ExperimentReport(config=config, meta=_meta(config))
    # building every point first surfaces domain errors before any work is done
    contexts = [_build_point(config, p) for p in range(len(config.grid))]
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for point in range(len(config.grid)):
            ctx = contexts[point]
            if config.warmup:
                _warmup(config, ctx, point)
            if pool is None:
                parts = [_run_chunk(config, point, 0, config.trials, ctx)]
            else:
                futures = [pool.submit(_run_chunk, config, point, a, b)
                           for a, b in _chunks(config.trials, workers)]
                parts = [f.result() for f in futures]
            sel, est, failed, nonconv, runtime = (np.concatenate([p[k] for p in parts]) for k in range(5))
            trials = PointTrials(
                theta=ctx.theta, selections=sel,
                estimates={n: est[:, i] for i, n in enumerate(config.estimators)},
                failed={n: failed[:, i] for i, n in enumerate(config.estimators)},
                nonconverged={n: nonconv[:, i] for i, n in enumerate(config.estimators)},
                runtimes={n: runtime[:, i] for i, n in enumerate(config.estimators)},
            )
            crb = None
            if config.emit_crb:
                crb_cfg = replace(ctx.sa, K=config.crb_K)
                res = empirical_psi_crb(ctx.model, ctx.rule, ctx.theta, crb_cfg, _rng(config, point, _CRB))
                crb = res.value
                report.meta["crb_flagged"][str(point)] = res.flagged
            report.points.append(trials)
            rows = _summarize(config, point, ctx, trials, crb)
            report.rows.extend(rows)
            worst = max(rows, key=lambda r: r.fail_rate)
            if worst.fail_rate > config.fail_tolerance:
                raise FailureRateExceeded(
                    f"{worst.estimator} failed on {worst.n_failed}/{worst.n_trials} trials at "
                    f"{config.sweep}={ctx.sweep_value} (tolerance {config.fail_tolerance})", report)
    finally:
        if pool is not None:
            pool.shutdown()
    return report


def bench_runtime(config: ExperimentConfig, workers: int = 1, warmup: int = 3) -> ExperimentReport:
    """Wall-clock runtime per estimate along an M sweep, warmup trials discarded."""
    if config.sweep != "M":
        raise ConfigError("bench needs a sweep over M")
    if config.theta != "ones":
        raise ConfigError("bench uses the all-ones parameter recipe")
    return run_experiment(replace(config, timing=True, warmup=max(config.warmup, warmup)), workers)


def _meta(config: ExperimentConfig) -> dict:
    return {
        "version": __version__,
        "seed": config.seed,
        "config": config_to_ini(config),
        "crb_flagged": {},
    }


def report_meta(report: ExperimentReport) -> dict:
    """JSON-ready metadata: config echo plus per-row details absent from the CSV."""
    meta = dict(report.meta)
    meta["rows"] = [
        {
            "sweep_value": r.sweep_value,
            "estimator": r.estimator,
            "n_trials": r.n_trials,
            "n_failed": r.n_failed,
            "nonconverged_rate": r.nonconverged_rate,
            "psi_bias_per_m": None if r.psi_bias is None else [None if math.isnan(v) else v
                                                                for v in r.psi_bias.per_m.tolist()],
            "selection_counts": None if r.psi_bias is None else r.psi_bias.counts.tolist(),
        }
        for r in report.rows
    ]
    return meta
