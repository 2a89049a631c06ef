"""Experiment configuration and its INI-style file format.

The grammar is documented in ``docs/config-format.md``. Parsing is strict:
unknown sections or keys, malformed values and violated invariants all raise
:class:`ConfigError`.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..estimators import EstimatorConfig
from ..sa import SaConfig

SCENARIOS = ("linear-gaussian", "bernoulli", "spectrum", "spectrum-knn")
ESTIMATORS = ("ml", "ml-split", "ml-first", "mbp-psml", "2b-psml", "sa-psml", "james-stein")
SWEEP_VARS = ("N", "delta", "M", "K")
THETA_RECIPES = ("gaussian", "spectrum", "knn", "delta", "ones")
GAUSSIAN_COVS = ("inverse-square", "identity")

# fixed leading coordinates of the named recipes; the rest are filled in
_RECIPE_HEAD = {
    "gaussian": (1.05, 1.01, 1.02),
    "spectrum": (0.95, 0.96, 0.98, 3.0, 3.0, 3.0),
    "knn": (0.9, 0.95, 0.95),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "linear-gaussian"
    theta: str = "gaussian"
    theta_base: float = 0.5
    delta: float = 0.0
    M: int = 10
    N: int = 250
    split_x: float = 0.8
    sweep: str = "N"
    grid: tuple = (250,)
    trials: int = 2000
    estimators: tuple = ("ml", "ml-split", "2b-psml", "sa-psml")
    seed: int = 0
    emit_crb: bool = False
    crb_K: int = 10_000
    fail_tolerance: float = 0.01
    timing: bool = False
    warmup: int = 0
    knn_size: int = 500
    knn_k: int = 5
    gaussian_cov: str = "inverse-square"
    sa: SaConfig = field(default_factory=SaConfig)
    est: EstimatorConfig = field(default_factory=EstimatorConfig)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}")
        if self.sweep not in SWEEP_VARS:
            raise ConfigError(f"sweep must be one of {SWEEP_VARS}")
        if not self.grid:
            raise ConfigError("grid must not be empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 0.0 < self.split_x < 1.0:
            raise ConfigError("split_x must lie strictly between 0 and 1")
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ConfigError(f"unknown estimators {bad}; choose from {ESTIMATORS}")
        if len(set(self.estimators)) != len(self.estimators):
            raise ConfigError("estimators must not repeat")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.crb_K < 1 or self.knn_size < 1 or self.knn_k < 1 or self.warmup < 0:
            raise ConfigError("crb_K, knn_size and knn_k must be >= 1 and warmup >= 0")
        if not 0.0 <= self.fail_tolerance <= 1.0:
            raise ConfigError("fail_tolerance must lie in [0, 1]")
        if self.gaussian_cov not in GAUSSIAN_COVS:
            raise ConfigError(f"gaussian cov must be one of {GAUSSIAN_COVS}")
        if self.theta not in THETA_RECIPES:
            _parse_floats(self.theta, "theta")
        if self.scenario == "spectrum-knn" and ("2b-psml" in self.estimators or (
                "mbp-psml" in self.estimators and self.est.g_source != "stochastic")):
            raise ConfigError("the kNN rule is a black box; only stochastic-gradient PSML applies")
        for point in range(len(self.grid)):
            self.point_setting(point)

    @property
    def rho_y(self) -> float:
        return 1.0 - self.split_x

    def point_setting(self, point: int) -> dict:
        """Resolved ``M, n_x, n_y, theta, sa`` at one sweep point."""
        value = self.grid[point]
        M, N, delta, sa = self.M, self.N, self.delta, self.sa
        if self.sweep == "N":
            N = int(value)
        elif self.sweep == "M":
            M = int(value)
        elif self.sweep == "delta":
            delta = float(value)
        else:
            try:
                sa = replace(sa, K=int(value))
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        n_x = int(round(self.split_x * N))
        n_y = N - n_x
        if n_x < 1 or n_y < 1:
            raise ConfigError(f"N={N} leaves an empty stage at split {self.split_x}")
        if M < 1:
            raise ConfigError("M must be >= 1")
        if "james-stein" in self.estimators and M < 3:
            raise ConfigError("james-stein needs M >= 3")
        if "mbp-psml" in self.estimators and self.est.g_source == "analytic-full" and M > 2:
            raise ConfigError("the analytic-full gradient is only available for M <= 2")
        return {"M": M, "n_x": n_x, "n_y": n_y, "theta": theta_recipe(self, M, delta), "sa": sa}


def _parse_floats(text: str, name: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{name} must be a nonempty list of finite numbers")
    return vals


def theta_recipe(config: ExperimentConfig, M: int, delta: float) -> np.ndarray:
    """True parameter vector for dimension ``M`` and offset ``delta``."""
    name = config.theta
    if name == "ones":
        return np.ones(M)
    if name == "delta":
        theta = np.full(M, config.theta_base)
        theta[0] += delta
        return theta
    if name in _RECIPE_HEAD:
        head = _RECIPE_HEAD[name]
        tail_zero = name == "gaussian"
        if M < len(head) + tail_zero:
            raise ConfigError(f"theta recipe {name!r} needs M >= {len(head) + tail_zero}")
        theta = np.ones(M)
        theta[: len(head)] = head
        if tail_zero:
            theta[-1] = 0.0
        return theta
    vals = np.array(_parse_floats(name, "theta"))
    if len(vals) != M:
        raise ConfigError(f"explicit theta has {len(vals)} entries but M={M}")
    return vals


# -- file format -------------------------------------------------------------

def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _names(text: str) -> tuple:
    return tuple(t for t in text.replace(",", " ").split())


def _grid(text: str) -> tuple:
    """Integer tokens stay ``int``; anything else must be a finite float."""
    out = []
    for tok in text.replace(",", " ").split():
        try:
            out.append(int(tok))
        except ValueError:
            out.append(_parse_floats(tok, "grid")[0])
    return tuple(out)


# section -> {key: (dataclass field, converter)}; keys are case-insensitive
_EXPERIMENT_KEYS = {
    "scenario": ("scenario", str.strip),
    "theta": ("theta", str.strip),
    "theta_base": ("theta_base", float),
    "delta": ("delta", float),
    "m": ("M", int),
    "n": ("N", int),
    "split_x": ("split_x", float),
    "sweep": ("sweep", str.strip),
    "grid": ("grid", _grid),
    "trials": ("trials", int),
    "estimators": ("estimators", _names),
    "seed": ("seed", int),
    "emit_crb": ("emit_crb", _bool),
    "crb_k": ("crb_K", int),
    "fail_tolerance": ("fail_tolerance", float),
    "timing": ("timing", _bool),
    "warmup": ("warmup", int),
}
_SA_KEYS = {"k": ("K", int), "zero_threshold": ("zero_threshold", float),
            "common_random_numbers": ("common_random_numbers", _bool)}
_EST_KEYS = {"delta": ("delta", float), "max_iter": ("max_iter", int),
             "update_mode": ("update_mode", str.strip), "g_source": ("g_source", str.strip)}
_KNN_KEYS = {"size": ("knn_size", int), "k": ("knn_k", int)}
_GAUSSIAN_KEYS = {"cov": ("gaussian_cov", str.strip)}
_SECTIONS = {"experiment": _EXPERIMENT_KEYS, "sa": _SA_KEYS, "estimator": _EST_KEYS,
             "knn": _KNN_KEYS, "gaussian": _GAUSSIAN_KEYS}


def _new_parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))


def parse_config(*texts: str, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from INI texts; later texts and then ``overrides`` win.

    ``overrides`` maps experiment-level field names (``seed``, ``trials``...)
    to already-typed values.
    """
    parser = _new_parser()
    try:
        for text in texts:
            parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    top, sa, est = {}, {}, {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        keys = _SECTIONS[section]
        target = sa if section == "sa" else est if section == "estimator" else top
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            name, conv = keys[key]
            try:
                target[name] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    top.update(overrides or {})
    try:
        return ExperimentConfig(sa=SaConfig(**sa), est=EstimatorConfig(**est), **top)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str, *base_texts: str, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(*base_texts, text, overrides=overrides)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_ini(config: ExperimentConfig) -> str:
    """Serialize every field; ``parse_config`` of the result equals ``config``."""
    lines = []
    for section, keys in _SECTIONS.items():
        lines.append(f"[{section}]")
        src = config.sa if section == "sa" else config.est if section == "estimator" else config
        for key, (name, _) in keys.items():
            lines.append(f"{key} = {_fmt(getattr(src, name))}")
        lines.append("")
    return "\n".join(lines)
