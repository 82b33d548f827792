"""Command line entry point: ``run``, ``sweep`` and ``fit`` subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, LowInertiaError
from .paramfit import FAMILIES, StepResponseData, fit_transfer_function, params_to_record
from .scenario import (EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, ScenarioError, load_config, run_scenario,
                       sweep)

logger = logging.getLogger("lowinertia")


class UsageError(Exception):
    pass


def _parse_shares(text: str) -> list[float]:
    items = [s for s in (p.strip() for p in text.split(",")) if s]
    if not items:
        raise argparse.ArgumentTypeError("share list is empty")
    try:
        return [float(s) for s in items]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad share list {text!r}") from exc


def _parse_pairs(text: str | None, sep: str = "=") -> dict[str, str]:
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        key, _, value = item.partition(sep)
        if not _ or not key.strip():
            raise argparse.ArgumentTypeError(f"expected key{sep}value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="scenario config (YAML or JSON)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--dt", type=float, help="output sample interval, s")
    p.add_argument("--horizon-freq", type=float, help="frequency horizon, s")
    p.add_argument("--horizon-volt", type=float, help="voltage horizon, s")
    p.add_argument("--dump-matrices", action="store_true", default=None, help="write assembled matrices as CSV")
    p.add_argument("--run-oracle", action="store_true", default=None, help="cross-check against RK4")
    p.add_argument("--eigen-report", action="store_true", default=None, help="write eigenvalues and damping")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lowinertia",
                                     description="Analytic frequency and voltage response of SG/GFM networks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _scenario_flags(sub.add_parser("run", help="run one scenario"))

    p = sub.add_parser("sweep", help="run a scenario per GFM share")
    _scenario_flags(p)
    p.add_argument("--shares", type=_parse_shares, help="comma separated GFM shares in percent, e.g. 0,25,50")
    p.add_argument("--order", help="comma separated generator buses, replaced first to last")

    p = sub.add_parser("fit", help="fit SG model parameters to a step response")
    p.add_argument("data", help="two-column CSV: time_s, value_pu (a header row is allowed)")
    p.add_argument("--family", required=True, choices=sorted(FAMILIES))
    p.add_argument("--input", type=float, required=True, help="step input magnitude, pu")
    p.add_argument("--alpha", type=float, default=1.0, help="device base ratio S_B/S_i")
    p.add_argument("--guess", default="", help="initial guess, e.g. M=7,D=1,R_SG=0.05")
    p.add_argument("--bounds", default="", help="bounds, e.g. M=1:20,D=0:5")
    p.add_argument("--bus", default="default", help="bus id key of the emitted record")
    p.add_argument("--out", required=True, help="parameter file to write (YAML)")
    return parser


def _write_error(out: str | None, payload: dict) -> None:
    if not out:
        return
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
        (path / "error.json").write_text(json.dumps(payload, indent=2) + "\n")
    except OSError as exc:
        logger.error("could not write error.json: %s", exc)


def _overrides(args) -> dict:
    return dict(out=args.out, dt=args.dt, horizon_freq=args.horizon_freq, horizon_volt=args.horizon_volt,
                dump_matrices=args.dump_matrices, run_oracle=args.run_oracle, eigen_report=args.eigen_report)


def _cmd_run(args) -> int:
    config = load_config(args.config, **_overrides(args))
    try:
        result = run_scenario(config)
    except ScenarioError as exc:
        logger.error("%s", exc)
        _write_error(config.out, exc.to_dict())
        return exc.exit_code
    print(f"wrote {len(result.files)} files to {result.out_dir}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = load_config(args.config, **_overrides(args))
    order = [int(b) for b in args.order.split(",") if b.strip()] if args.order else None
    shares = args.shares if args.shares is not None else config.shares
    if not shares:
        raise UsageError("sweep needs --shares or a sweep.shares list in the config")
    try:
        result = sweep(config, shares, order)
    except ScenarioError as exc:
        logger.error("%s", exc)
        _write_error(config.out, exc.to_dict())
        return exc.exit_code
    for label, f in result.failures.items():
        print(f"{label}: FAILED in {f['stage']}: {f['message']}")
    print(f"{len(result.scenarios)} of {len(shares)} scenarios written under {config.out}")
    return result.exit_code


def _read_two_column(path) -> tuple[np.ndarray, np.ndarray]:
    try:
        with open(path) as fh:
            first = fh.readline()
        skip = 0 if _is_numeric_row(first) else 1
        data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read step data {path}: {exc}") from exc
    if data.shape[1] != 2:
        raise ConfigError(f"step data must have two columns, got {data.shape[1]}")
    return data[:, 0], data[:, 1]


def _is_numeric_row(line: str) -> bool:
    try:
        [float(x) for x in line.split(",")]
        return True
    except ValueError:
        return False


def _cmd_fit(args) -> int:
    t, y = _read_two_column(args.data)
    cls = FAMILIES[args.family]
    try:
        guess = cls(**{k: float(v) for k, v in _parse_pairs(args.guess).items()})
        bounds = {}
        for k, v in _parse_pairs(args.bounds).items():
            lo, _, hi = v.partition(":")
            bounds[k] = (float(lo), float(hi))
        data = StepResponseData(t, y, args.input, args.family, args.alpha)
    except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
        raise ConfigError(str(exc)) from exc
    try:
        result = fit_transfer_function(data, guess, bounds)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    key = args.bus if args.bus == "default" else int(args.bus)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(yaml.safe_dump({key: params_to_record(args.family, result.params)}, sort_keys=False))
    print(f"rms {result.rms:.3e} pu (initial {result.initial_rms:.3e}); wrote {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "fit": _cmd_fit}[args.command]
    try:
        return handler(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    except ConfigError as exc:
        logger.error("config: %s", exc)
        _write_error(getattr(args, "out", None) if args.command != "fit" else None,
                     {"schema": 1, "status": "error", "stage": "config", "error": type(exc).__name__,
                      "message": str(exc)})
        return EXIT_CONFIG
    except ScenarioError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except LowInertiaError as exc:
        logger.error("%s", exc)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
