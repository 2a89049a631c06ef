"""Command-line entry point: ``psml run | bench | presets list``.

Exit codes: 0 success, 2 configuration error, 3 tolerated failure rate
exceeded (the partial CSV is still written).
"""

from __future__ import annotations

import argparse
import sys

from .harness import (
    DESCRIPTIONS,
    PRESETS,
    ConfigError,
    FailureRateExceeded,
    bench_runtime,
    emit_csv,
    emit_meta,
    load_config,
    parse_config,
    preset_texts,
    run_experiment,
    write_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_FAILURES = 0, 2, 3


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psml", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run a Monte Carlo experiment"),
                            ("bench", "time estimators along an M sweep")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="config file; its keys override the preset")
        p.add_argument("--preset", help="named preset used as the base config")
        p.add_argument("--seed", type=_u64, help="master seed")
        p.add_argument("--trials", type=_positive, help="Monte Carlo trials per sweep point")
        p.add_argument("--out", help="CSV path (default: stdout); metadata goes to <out>.meta.json")
        p.add_argument("--workers", type=_positive, default=1, help="worker processes")
    presets = sub.add_parser("presets", help="preset utilities")
    presets.add_argument("action", choices=["list"])
    return parser


def resolve_config(args):
    if args.config is None and args.preset is None:
        raise ConfigError("give --preset, --config or both")
    base = preset_texts(args.preset) if args.preset else ()
    overrides = {k: v for k, v in (("seed", args.seed), ("trials", args.trials)) if v is not None}
    if args.config:
        return load_config(args.config, *base, overrides=overrides)
    return parse_config(*base, overrides=overrides)


def _write(report, out):
    if out is None:
        write_csv(report, sys.stdout)
        return
    emit_csv(report, out)
    emit_meta(report, out + ".meta.json")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        width = max(len(n) for n in PRESETS)
        for name in PRESETS:
            print(f"{name:<{width}}  {DESCRIPTIONS[name]}")
        return EXIT_OK
    try:
        config = resolve_config(args)
        runner = bench_runtime if args.command == "bench" else run_experiment
        report = runner(config, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FailureRateExceeded as exc:
        _write(exc.report, args.out)
        print(f"failure rate exceeded: {exc}", file=sys.stderr)
        return EXIT_FAILURES
    _write(report, args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
