"""Scenario pipeline: load case -> assemble -> solve -> metrics -> files.

Config schema (YAML or JSON; relative paths resolve against the config file)::

    name: ieee39_mixed
    case: builtin:case39          # or a path to a .m / .yaml / .json case
    devices: {30: gfm, 31: gfm}   # per generator bus kind override
    parameters: [params.yaml]     # parameter files keyed by bus id / "default"
    disturbance: {bus: 15, load_mw: 307.5, load_mvar: 140.88}
                                  # or p_mw / q_mvar as injection changes
    horizons: {frequency: 20, voltage: 2}
    dt: 0.1
    f0: 60
    d_prime: 0.05
    out: results/ieee39
    flags: {dump_matrices: false, run_oracle: false, eigen_report: false}
    oracle_dt: 1.0e-5
    sweep: {shares: [0, 25, 50, 75, 100], order: [39, 32]}   # optional
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from . import lti
from .case import NetworkCase, apply_params, load_param_file, parse_case
from .devices import DEVICE_KINDS, GFM, SG, Constants
from .errors import (AssemblyError, CaseError, ConfigError, LowInertiaError, NumericalError,
                     PowerFlowError, SingularNetworkError)
from .frequency import DisturbanceSpec, assemble_frequency_model
from .metrics import frequency_metrics, voltage_metrics
from .network import build_susceptance, kron_reduce
from .voltage import assemble_voltage_model, estimate_reactive_disturbance

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


@dataclass(frozen=True)
class ScenarioConfig:
    case: str
    disturbance: DisturbanceSpec
    name: str = "scenario"
    devices: Mapping[int, str] = field(default_factory=dict)
    parameters: tuple[str, ...] = ()
    horizon_freq: float = 20.0
    horizon_volt: float = 2.0
    dt: float = 0.1
    f0: float = 60.0
    d_prime: float = 0.05
    out: str = "results"
    dump_matrices: bool = False
    run_oracle: bool = False
    eigen_report: bool = False
    oracle_dt: float = 1e-5
    shares: tuple[float, ...] | None = None
    order: tuple[int, ...] | None = None

    def __post_init__(self):
        for name in ("horizon_freq", "horizon_volt", "dt", "oracle_dt"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.dt > min(self.horizon_freq, self.horizon_volt):
            raise ConfigError("dt exceeds a horizon")
        for bus, kind in self.devices.items():
            if kind not in DEVICE_KINDS:
                raise ConfigError(f"device kind for bus {bus} must be one of {DEVICE_KINDS}, got {kind!r}")

    @property
    def constants(self) -> Constants:
        return Constants(f0=self.f0, d_prime=self.d_prime)


class ScenarioError(LowInertiaError):
    """Pipeline failure tagged with the stage it happened in."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")

    @property
    def exit_code(self) -> int:
        if isinstance(self.cause, (PowerFlowError, NumericalError, SingularNetworkError, np.linalg.LinAlgError)):
            return EXIT_NUMERICAL
        return EXIT_CONFIG

    def to_dict(self) -> dict:
        return {"schema": SCHEMA_VERSION, "status": "error", "stage": self.stage,
                "error": type(self.cause).__name__, "message": str(self.cause)}


def _resolve(ref: str, base: Path) -> str:
    if ref.startswith("builtin:"):
        return ref
    p = Path(ref)
    return str(p if p.is_absolute() else (base / p))


def _disturbance_from(rec: Mapping[str, Any]) -> DisturbanceSpec:
    if not isinstance(rec, Mapping) or "bus" not in rec:
        raise ConfigError("disturbance needs a 'bus'")
    has_load = "load_mw" in rec or "load_mvar" in rec
    has_inj = "p_mw" in rec or "q_mvar" in rec
    if has_load and has_inj:
        raise ConfigError("give the disturbance either as load_mw/load_mvar or as p_mw/q_mvar, not both")
    try:
        if has_load:
            return DisturbanceSpec.load_step(int(rec["bus"]), float(rec.get("load_mw", 0.0)),
                                             float(rec.get("load_mvar", 0.0)))
        return DisturbanceSpec(int(rec["bus"]), float(rec.get("p_mw", 0.0)), float(rec.get("q_mvar", 0.0)))
    except AssemblyError as exc:
        raise ConfigError(str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad disturbance entry: {exc}") from exc


def config_from_dict(data: Mapping[str, Any], base_dir: Path = Path("."), **overrides) -> ScenarioConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a mapping")
    if "case" not in data:
        raise ConfigError("config needs a 'case'")
    if "disturbance" not in data:
        raise ConfigError("config needs a 'disturbance'")
    horizons = data.get("horizons") or {}
    flags = data.get("flags") or {}
    sweep = data.get("sweep") or {}
    params = data.get("parameters") or []
    if isinstance(params, str):
        params = [params]
    try:
        kw = dict(
            case=_resolve(str(data["case"]), base_dir),
            disturbance=_disturbance_from(data["disturbance"]),
            name=str(data.get("name", "scenario")),
            devices={int(k): str(v).lower() for k, v in (data.get("devices") or {}).items()},
            parameters=tuple(_resolve(str(p), base_dir) for p in params),
            horizon_freq=float(horizons.get("frequency", 20.0)),
            horizon_volt=float(horizons.get("voltage", 2.0)),
            dt=float(data.get("dt", 0.1)),
            f0=float(data.get("f0", 60.0)),
            d_prime=float(data.get("d_prime", 0.05)),
            out=_resolve(str(data.get("out", "results")), base_dir),
            dump_matrices=bool(flags.get("dump_matrices", False)),
            run_oracle=bool(flags.get("run_oracle", False)),
            eigen_report=bool(flags.get("eigen_report", False)),
            oracle_dt=float(data.get("oracle_dt", 1e-5)),
            shares=tuple(float(s) for s in sweep["shares"]) if "shares" in sweep else None,
            order=tuple(int(b) for b in sweep["order"]) if "order" in sweep else None,
        )
    except (TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioConfig(**kw)


def load_config(path, **overrides) -> ScenarioConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {str(exc).splitlines()[0]}") from exc
    return config_from_dict(data, path.parent, **overrides)


def load_scenario_case(config: ScenarioConfig) -> NetworkCase:
    if config.case.startswith("builtin:"):
        name = config.case.split(":", 1)[1]
        ref = resources.files("lowinertia") / "data" / f"{name}.m"
        with resources.as_file(ref) as p:
            if not p.is_file():
                raise ConfigError(f"no builtin case named {name!r}")
            case = parse_case(p)
    else:
        if not Path(config.case).is_file():
            raise ConfigError(f"case file {config.case} does not exist")
        case = parse_case(config.case)
    for pf in config.parameters:
        if not Path(pf).is_file():
            raise ConfigError(f"parameter file {pf} does not exist")
        case = apply_params(case, load_param_file(pf))
    unknown = sorted(set(config.devices) - set(case.gen_index))
    if unknown:
        raise ConfigError(f"device overrides for non-generator buses {unknown}")
    return case


# ---------------------------------------------------------------------------
# output formatting

def fmt(x: float) -> str:
    return format(float(x), ".9g")


def trajectory_csv(times, columns: list[int], rows: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_s"] + [str(c) for c in columns])
    for k, t in enumerate(times):
        w.writerow([fmt(t)] + [fmt(v) for v in rows[:, k]])
    return buf.getvalue()


def matrix_csv(M: np.ndarray, rows=None, cols=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    M = np.atleast_2d(np.asarray(M, float))
    if cols is not None:
        w.writerow([""] + [str(c) for c in cols])
    for i in range(M.shape[0]):
        lead = [str(rows[i])] if rows is not None else []
        if cols is not None and rows is None:
            lead = [""]
        w.writerow(lead + [fmt(v) for v in M[i]])
    return buf.getvalue()


def _labels(model: lti.LtiModel) -> list[str]:
    return [f"{k}:{b}" for k, b in model.state_labels]


def _json_dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


# ---------------------------------------------------------------------------
# pipeline

@dataclass
class ScenarioResult:
    name: str
    out_dir: Path
    files: dict[str, Path]
    metrics: dict
    timing: dict
    frequency_model: lti.LtiModel
    voltage_model: lti.LtiModel
    frequency: lti.Trajectory
    voltage: lti.Trajectory


class _Stopwatch:
    def __init__(self):
        self.stages: dict[str, float] = {}

    def run(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + (time.perf_counter() - t0) * 1e3


def _stage(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ScenarioError:
        raise
    except (LowInertiaError, ValueError, np.linalg.LinAlgError) as exc:
        raise ScenarioError(stage, exc) from exc


def solve_frequency(case: NetworkCase, devices, disturbance: DisturbanceSpec, constants: Constants,
                    horizon: float, dt: float, watch: _Stopwatch | None = None):
    """Reduce, assemble, factorize and evaluate the frequency model."""
    watch = watch or _Stopwatch()
    net = watch.run("frequency.assembly_ms", lambda: kron_reduce(build_susceptance(case)))
    model = watch.run("frequency.assembly_ms", assemble_frequency_model, net, devices, disturbance,
                      case.base_mva, constants)
    fact = watch.run("frequency.factorization_ms", lti.factorize, model.A)
    traj = watch.run("frequency.evaluation_ms", lti.solve_analytic, model, horizon, dt, fact)
    return net, model, traj


def run_scenario(config: ScenarioConfig, case: NetworkCase | None = None, write: bool = True) -> ScenarioResult:
    """Run one scenario and (optionally) write its output files to ``config.out``."""
    case = case if case is not None else _stage("case", load_scenario_case, config)
    devices = _stage("case", case.devices, config.devices)
    dist = config.disturbance
    constants = config.constants
    watch = _Stopwatch()
    t_start = time.perf_counter()

    net, f_model, f_traj = _stage("frequency", solve_frequency, case, devices, dist, constants,
                                  config.horizon_freq, config.dt, watch)
    rq = _stage("powerflow", watch.run, "voltage.assembly_ms", estimate_reactive_disturbance, case, dist, devices)
    v_model = _stage("voltage", watch.run, "voltage.assembly_ms", assemble_voltage_model, devices, rq, case.base_mva)
    v_fact = _stage("voltage", watch.run, "voltage.factorization_ms", lti.factorize, v_model.A)
    v_traj = _stage("voltage", watch.run, "voltage.evaluation_ms", lti.solve_analytic, v_model,
                    config.horizon_volt, config.dt, v_fact)
    total_ms = (time.perf_counter() - t_start) * 1e3

    gen_buses, omega = f_traj.select("omega")
    freq_hz = config.f0 * (1.0 + omega)
    v_buses, dv = v_traj.select("dV")

    metrics = {
        "schema": SCHEMA_VERSION,
        "scenario": config.name,
        "case": case.name,
        "f0_hz": config.f0,
        "disturbance": {"bus": dist.bus, "p_mw": dist.p_mw, "q_mvar": dist.q_mvar},
        "device_kinds": {str(d.bus): d.kind for d in devices},
        "frequency": {str(b): frequency_metrics(f_traj.times, freq_hz[i], config.f0).to_dict()
                      for i, b in enumerate(gen_buses)},
        "voltage": {str(b): voltage_metrics(v_traj.times, dv[i]).to_dict() for i, b in enumerate(v_buses)},
        "reactive_disturbance_pu": {str(b): float(q) for b, q in zip(rq.gen_index, rq.dQ_G)},
        "solver": {"frequency": f_traj.method, "voltage": v_traj.method,
                   "warnings": list(f_traj.warnings + v_traj.warnings)},
    }
    stages = {k: round(v, 3) for k, v in watch.stages.items()}
    timing = {
        "schema": SCHEMA_VERSION,
        "scenario": config.name,
        "n_states": {"frequency": f_model.n_states, "voltage": v_model.n_states},
        "stages_ms": stages,
        "frequency_ms": round(sum(v for k, v in watch.stages.items() if k.startswith("frequency.")), 3),
        "voltage_ms": round(sum(v for k, v in watch.stages.items() if k.startswith("voltage.")), 3),
        "stage_sum_ms": round(sum(watch.stages.values()), 3),
        "total_ms": round(total_ms, 3),
    }

    out = Path(config.out)
    files: dict[str, Path] = {}
    extras: dict[str, str] = {}
    if config.eigen_report:
        extras["eigen_report.json"] = _json_dump(_clean({
            "schema": SCHEMA_VERSION,
            "frequency": lti.eigen_diagnostics(f_model).to_dict(),
            "voltage": lti.eigen_diagnostics(v_model).to_dict(),
        }))
    if config.run_oracle:
        extras["oracle_report.json"] = _json_dump(_stage("oracle", oracle_report, config, f_model, v_model,
                                                         f_traj, v_traj))
    if config.dump_matrices:
        extras.update(_matrix_dump(case, net, f_model, v_model))

    if write:
        _stage("output", _write_outputs, out, files, {
            "frequency.csv": trajectory_csv(f_traj.times, gen_buses, freq_hz),
            "voltage.csv": trajectory_csv(v_traj.times, v_buses, dv),
            "metrics.json": _json_dump(_clean(metrics)),
            "timing.json": _json_dump(timing),
            **extras,
        })
    return ScenarioResult(config.name, out, files, metrics, timing, f_model, v_model, f_traj, v_traj)


def _write_outputs(out: Path, files: dict, contents: dict[str, str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in contents.items():
        p = out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
        files[name] = p


def _matrix_dump(case, net, f_model, v_model) -> dict[str, str]:
    part = build_susceptance(case)
    order = list(part.gen_index) + list(part.load_index)
    return {
        "matrices/B_full.csv": matrix_csv(part.full(), order, order),
        "matrices/B_r.csv": matrix_csv(net.B_r, net.gen_index, net.gen_index),
        "matrices/B_L.csv": matrix_csv(net.B_L, net.gen_index, net.load_index),
        "matrices/A_f.csv": matrix_csv(f_model.A, _labels(f_model), _labels(f_model)),
        "matrices/B_f.csv": matrix_csv(f_model.B, _labels(f_model), f_model.input_labels),
        "matrices/u_f.csv": matrix_csv(f_model.u[:, None], f_model.input_labels, ["u"]),
        "matrices/A_v.csv": matrix_csv(v_model.A, _labels(v_model), _labels(v_model)),
        "matrices/B_v.csv": matrix_csv(v_model.B, _labels(v_model), v_model.input_labels),
        "matrices/u_v.csv": matrix_csv(v_model.u[:, None], v_model.input_labels, ["u"]),
    }


def oracle_report(config: ScenarioConfig, f_model, v_model, f_traj, v_traj) -> dict:
    """Compare the analytic trajectories and their metrics against RK4."""
    report = {"schema": SCHEMA_VERSION, "dt_internal": config.oracle_dt}
    for label, model, traj, horizon in (("frequency", f_model, f_traj, config.horizon_freq),
                                         ("voltage", v_model, v_traj, config.horizon_volt)):
        ref = lti.solve_numeric_oracle(model, horizon, config.oracle_dt, config.dt)
        report[label] = {"max_abs_diff": float(np.abs(ref.values - traj.values).max())}
    return report


# ---------------------------------------------------------------------------
# sweeps

def replacement_kinds(case: NetworkCase, share: float, order=None) -> dict[int, str]:
    """Device kinds for a GFM share in percent.

    round(share * n / 100) generators (halves rounded up) become GFMs: the
    first ones of ``order`` if given, else the largest ratings first.
    """
    if not 0 <= share <= 100:
        raise ConfigError(f"share {share} is outside [0, 100]")
    gens = case.generators_ordered()
    n = len(gens)
    k = int(math.floor(share * n / 100.0 + 0.5))
    if order:
        unknown = [b for b in order if b not in case.gen_index]
        if unknown:
            raise ConfigError(f"replacement order names non-generator buses {unknown}")
        ranked = list(dict.fromkeys(order)) + [g.bus for g in gens if g.bus not in order]
    else:
        ranked = [g.bus for g in sorted(gens, key=lambda g: -g.rating_mva)]
    chosen = set(ranked[:k])
    return {g.bus: (GFM if g.bus in chosen else SG) for g in gens}


@dataclass
class SweepResult:
    scenarios: dict[str, ScenarioResult]
    failures: dict[str, dict]
    files: dict[str, Path]

    @property
    def exit_code(self) -> int:
        if not self.failures:
            return EXIT_OK
        return max(f.get("exit_code", EXIT_NUMERICAL) for f in self.failures.values())


BOX_METRICS = (("frequency", "nadir_hz"), ("frequency", "rocof_hz_per_s"), ("frequency", "hertz_sec"),
               ("voltage", "max_dev_pu"))


def sweep(config: ScenarioConfig, shares=None, order=None) -> SweepResult:
    """Run the scenario once per GFM share, continuing past per-scenario failures."""
    shares = tuple(shares if shares is not None else (config.shares or ()))
    if not shares:
        raise ConfigError("sweep needs a nonempty share list")
    order = order if order is not None else config.order
    case = _stage("case", load_scenario_case, config)
    root = Path(config.out)
    results, failures = {}, {}
    for share in shares:
        label = f"share_{share:g}"
        kinds = replacement_kinds(case, share, order)
        sub = replace(config, name=f"{config.name}_{label}", devices=kinds, out=str(root / label))
        try:
            results[label] = run_scenario(sub, case)
        except ScenarioError as exc:
            logger.error("scenario %s failed: %s", label, exc)
            failures[label] = exc.to_dict() | {"exit_code": exc.exit_code}
            Path(sub.out).mkdir(parents=True, exist_ok=True)
            (Path(sub.out) / "error.json").write_text(_json_dump(exc.to_dict()))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "bus", "metric", "value"])
    for label, res in results.items():
        for group, metric in BOX_METRICS:
            for bus, rec in res.metrics[group].items():
                w.writerow([label, bus, metric, fmt(rec[metric])])
    summary = {
        "schema": SCHEMA_VERSION,
        "shares": list(shares),
        "scenarios": {label: {"n_states": res.timing["n_states"],
                              "gfm_buses": [int(b) for b, k in res.metrics["device_kinds"].items() if k == GFM]}
                      for label, res in results.items()},
        "failures": failures,
    }
    timing = {label: res.timing for label, res in results.items()}
    files: dict[str, Path] = {}
    _write_outputs(root, files, {"boxplot.csv": buf.getvalue(), "sweep_summary.json": _json_dump(summary),
                                 "sweep_timing.json": _json_dump(timing)})
    return SweepResult(results, failures, files)
