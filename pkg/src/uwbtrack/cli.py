"""Command-line entry point: ``uwbtrack <command> [flags]``.

Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .core import ConfigError, SimConfig, load_config
from .sim import montecarlo as mc

COMMANDS = ("sim-estimators", "sim-control", "sweep-outliers", "coverage", "validate-config")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; route it to the config-error code
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uwbtrack", description="Single-anchor UWB tracking studies.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("config_path", nargs="?", help="config file (same as --config)")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    return p


def effective_config(args) -> SimConfig:
    """File first, then ``--set``, then the dedicated flags."""
    if args.config and args.config_path and args.config != args.config_path:
        raise ConfigError("config given twice with different paths")
    path = args.config or args.config_path
    cfg = load_config(path) if path else SimConfig()
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.jobs is not None:
        overrides["jobs"] = str(args.jobs)
    return cfg.with_overrides(overrides) if overrides else cfg


def _run(command: str, cfg: SimConfig, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config").write_text(cfg.to_text(), encoding="utf-8")
    written = []
    if command == "sweep-outliers":
        cells = mc.sweep_outliers(cfg)
        written.append(mc.write_sweep(out / "rmse_sweep.csv", cells))
        written.append(mc.write_summary(out / "summary.csv", cells))
    elif command == "sim-control":
        cells = mc.control_study(cfg)
        written.append(mc.write_summary(out / "summary.csv", cells))
        traces = mc.example_traces("control", cfg, cells[0].seeds[0], cfg.controller_list)
        written.append(mc.write_csv(out / "control_trace.csv", mc.CONTROL_COLUMNS,
                                    [r for t in traces for r in mc.control_rows(t)]))
    elif command == "sim-estimators":
        cells = mc.estimator_study(cfg)
        written.append(mc.write_sweep(out / "rmse_sweep.csv", cells))
        written.append(mc.write_summary(out / "summary.csv", cells))
        traces = mc.example_traces("estimation", cfg, cells[0].seeds[0], cfg.estimator_list)
        written.append(mc.write_csv(out / "estimate_trace.csv", mc.ESTIMATE_COLUMNS,
                                    [r for t in traces for r in mc.estimate_rows(t)]))
    elif command == "coverage":
        cells = mc.coverage_study(cfg)
        written.append(mc.write_coverage(out / "coverage.csv", cells, cfg.alpha_risk))
        written.append(mc.write_summary(out / "summary.csv", cells))
    return written


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = effective_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate-config":
        print("config ok")
        return EXIT_OK
    try:
        for path in _run(args.command, cfg, Path(args.out)):
            print(path)
    except Exception as exc:  # noqa: BLE001 - any failure past parsing is a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
