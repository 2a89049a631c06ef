"""Named experiment presets, written in the config-file grammar.

``*-desk`` presets are sized for a laptop (2000 trials, M=10). ``*-full``
presets use the original experiment sizes (50000 trials, M=25 or 30) and
are not part of the test suite.
"""

from __future__ import annotations

from .config import ConfigError, ExperimentConfig, parse_config

_GAUSSIAN = """
[experiment]
scenario = linear-gaussian
theta = gaussian
split_x = 0.8
sweep = N
estimators = ml, ml-split, 2b-psml, sa-psml, james-stein
emit_crb = true
crb_K = 10000
[gaussian]
cov = inverse-square
"""

_BERNOULLI = """
[experiment]
scenario = bernoulli
theta = delta
theta_base = 0.5
N = 150
split_x = 0.75
sweep = delta
grid = 0.0, 0.05, 0.1, 0.2
estimators = ml, ml-split, 2b-psml, sa-psml
"""

_SPECTRUM = """
[experiment]
scenario = spectrum
theta = spectrum
split_x = 0.9
sweep = N
estimators = ml, ml-split, 2b-psml, sa-psml
"""

_KNN = """
[experiment]
scenario = spectrum-knn
theta = knn
split_x = 0.8
sweep = N
estimators = ml, ml-split, sa-psml
[knn]
size = 500
k = 5
"""

_RUNTIME = """
[experiment]
scenario = linear-gaussian
theta = ones
N = 250
split_x = 0.8
sweep = M
estimators = 2b-psml, sa-psml
"""

_GAUSSIAN_K = """
[experiment]
scenario = linear-gaussian
theta = gaussian
M = 10
N = 100
split_x = 0.8
sweep = K
grid = 100, 300, 1000, 3000
trials = 2000
estimators = sa-psml
"""

PRESETS = {
    "gaussian-desk": (_GAUSSIAN, "M = 10\ngrid = 50, 100, 200, 400\ntrials = 2000\n"),
    "bernoulli-desk": (_BERNOULLI, "M = 10\ntrials = 2000\n"),
    "spectrum-desk": (_SPECTRUM, "M = 10\ngrid = 100, 200, 400, 800\ntrials = 2000\n"),
    "spectrum-knn-desk": (_KNN, "M = 10\ngrid = 100, 200, 400, 800\ntrials = 2000\n"),
    "runtime-desk": (_RUNTIME, "grid = 5, 10, 25, 50\ntrials = 50\n"),
    "gaussian-k-desk": (_GAUSSIAN_K, ""),
    "gaussian-full": (_GAUSSIAN, "M = 25\ngrid = 50, 100, 200, 400, 800, 1600\ntrials = 50000\n"),
    "bernoulli-full": (_BERNOULLI, "M = 25\ntrials = 50000\n"),
    "spectrum-full": (_SPECTRUM, "M = 30\ngrid = 100, 200, 400, 800, 1600\ntrials = 50000\n"),
    "spectrum-knn-full": (_KNN, "M = 25\ngrid = 100, 200, 400, 800, 1600\ntrials = 50000\n"),
    "runtime-full": (_RUNTIME, "grid = 5, 10, 25, 50, 100\ntrials = 1000\n"),
    "runtime-full-large": (_RUNTIME, "N = 10000\ngrid = 5, 10, 25, 50, 100\ntrials = 1000\n"),
}

DESCRIPTIONS = {
    "gaussian-desk": "linear Gaussian, bias/PSMSE vs N, with the empirical Psi-CRB",
    "bernoulli-desk": "Bernoulli arms, bias/PSMSE vs the offset of the first arm",
    "spectrum-desk": "spectrum sensing (argmin selection), bias/PSMSE vs N",
    "spectrum-knn-desk": "spectrum sensing with a black-box kNN selection rule, vs N",
    "runtime-desk": "second-best and SA PSML runtime vs M (use with bench)",
    "gaussian-k-desk": "SA-PSML bias/PSMSE/runtime vs the number of Monte Carlo draws K",
    "gaussian-full": "gaussian-desk at M=25 and 50000 trials",
    "bernoulli-full": "bernoulli-desk at M=25 and 50000 trials",
    "spectrum-full": "spectrum-desk at M=30 and 50000 trials",
    "spectrum-knn-full": "spectrum-knn-desk at M=25 and 50000 trials",
    "runtime-full": "runtime-desk over M up to 100, N=250",
    "runtime-full-large": "runtime-desk over M up to 100, N=10000",
}


def preset_texts(name: str) -> tuple:
    """Config texts for a preset, in the order they are applied."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; see 'presets list'")
    base, extra = PRESETS[name]
    return (base, "[experiment]\n" + extra) if extra else (base,)


def preset(name: str, **overrides) -> ExperimentConfig:
    return parse_config(*preset_texts(name), overrides=overrides)
