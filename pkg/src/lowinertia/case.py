"""Network case model and loaders (MATPOWER text and the native YAML/JSON format).

Native case schema (YAML or JSON)::

    name: three_bus            # optional
    base_mva: 100
    buses:
      - {id: 1, type: generator, base_kv: 345}
      - {id: 2, type: load, base_kv: 345}
    branches:
      - {from: 1, to: 2, x: 0.1, status: 1}   # x in pu on base_mva; r, b ignored
    generators:
      - bus: 1
        rating_mva: 100
        kind: sg                 # sg | gfm
        p_mw: 50                 # active dispatch (power flow), default 0
        v_pu: 1.0                # voltage setpoint (power flow), default 1.0
        params:                  # optional; any of sg_freq, gfm_freq, sg_volt, gfm_volt
          sg_freq: {M: 7, D: 1, K: 1, R_SG: 0.05, T_SG: 7}
    loads:
      - {bus: 2, p_mw: 100, q_mvar: 0}

Only series reactance enters the models. Bus ``type`` is optional; when given
it must agree with the generator table.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .devices import DEVICE_KINDS, SG, Device, ParamSet, make_device
from .errors import CaseParseError, CaseValidationError

GENERATOR = "generator"
LOAD = "load"


@dataclass(frozen=True)
class Bus:
    id: int
    type: str
    base_kv: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    x: float
    status: bool = True


@dataclass(frozen=True)
class Generator:
    bus: int
    rating_mva: float
    kind: str = SG
    p_mw: float = 0.0
    v_pu: float = 1.0
    params: ParamSet = field(default_factory=ParamSet)


@dataclass(frozen=True)
class Load:
    bus: int
    p_mw: float
    q_mvar: float = 0.0


@dataclass(frozen=True)
class NetworkCase:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]
    base_mva: float = 100.0
    name: str = "case"

    def __post_init__(self):
        validate_case(self)

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    @property
    def gen_index(self) -> list[int]:
        """Generator bus ids in bus-table order."""
        return [b.id for b in self.buses if b.type == GENERATOR]

    @property
    def load_index(self) -> list[int]:
        return [b.id for b in self.buses if b.type == LOAD]

    def generator_at(self, bus_id: int) -> Generator:
        for g in self.generators:
            if g.bus == bus_id:
                return g
        raise KeyError(bus_id)

    def generators_ordered(self) -> list[Generator]:
        by_bus = {g.bus: g for g in self.generators}
        return [by_bus[b] for b in self.gen_index]

    def bus_loads_pu(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-bus (P, Q) consumption in pu, aligned with ``buses``."""
        pos = {b: i for i, b in enumerate(self.bus_ids)}
        p = np.zeros(len(self.buses))
        q = np.zeros(len(self.buses))
        for ld in self.loads:
            p[pos[ld.bus]] += ld.p_mw / self.base_mva
            q[pos[ld.bus]] += ld.q_mvar / self.base_mva
        return p, q

    def devices(self, kinds: Mapping[int, str] | None = None,
                params: Mapping[int, Mapping[str, Any]] | None = None) -> list[Device]:
        """Device list in ``gen_index`` order, with optional kind/parameter overrides keyed by bus."""
        kinds = kinds or {}
        params = params or {}
        out = []
        for g in self.generators_ordered():
            kind = kinds.get(g.bus, g.kind)
            out.append(make_device(kind, g.bus, g.rating_mva, g.params.merged(params.get(g.bus))))
        return out


def validate_case(case: NetworkCase) -> None:
    if not case.base_mva > 0:
        raise CaseValidationError(f"system base must be positive, got {case.base_mva}")
    ids = [b.id for b in case.buses]
    if not ids:
        raise CaseValidationError("case has no buses")
    seen = set()
    for i in ids:
        if i in seen:
            raise CaseValidationError(f"bus ids must be unique: bus {i} appears more than once")
        seen.add(i)
    for br in case.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in seen:
                raise CaseValidationError(
                    f"branch {br.from_bus}-{br.to_bus} references unknown bus {end}"
                )
        if br.from_bus == br.to_bus:
            raise CaseValidationError(f"branch {br.from_bus}-{br.to_bus} is a self-loop")
        if not br.x > 0:
            raise CaseValidationError(
                f"branch {br.from_bus}-{br.to_bus} reactance must be strictly positive, got {br.x}"
            )
    gen_buses = set()
    for g in case.generators:
        if g.bus not in seen:
            raise CaseValidationError(f"generator references unknown bus {g.bus}")
        if g.bus in gen_buses:
            raise CaseValidationError(
                f"bus {g.bus} hosts more than one generator; aggregate them into one device per bus"
            )
        gen_buses.add(g.bus)
        if not g.rating_mva > 0:
            raise CaseValidationError(f"generator at bus {g.bus} rating must be positive, got {g.rating_mva}")
        if g.kind not in DEVICE_KINDS:
            raise CaseValidationError(f"generator at bus {g.bus} has unknown kind {g.kind!r}")
    for b in case.buses:
        if b.type not in (GENERATOR, LOAD):
            raise CaseValidationError(f"bus {b.id} has unknown type {b.type!r}")
        if (b.type == GENERATOR) != (b.id in gen_buses):
            raise CaseValidationError(
                f"bus {b.id} is typed '{b.type}' but "
                + ("hosts a generator" if b.id in gen_buses else "hosts no generator")
            )
    for ld in case.loads:
        if ld.bus not in seen:
            raise CaseValidationError(f"load references unknown bus {ld.bus}")
    if not gen_buses:
        raise CaseValidationError("case has no generators")
    _check_connected(case)


def _check_connected(case: NetworkCase) -> None:
    n = len(case.buses)
    if n == 1:
        return
    pos = {b.id: i for i, b in enumerate(case.buses)}
    live = [br for br in case.branches if br.status]
    rows = [pos[br.from_bus] for br in live]
    cols = [pos[br.to_bus] for br in live]
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, labels = connected_components(graph, directed=False)
    if ncomp > 1:
        main = labels[0]
        stray = [case.buses[i].id for i in range(n) if labels[i] != main]
        raise CaseValidationError(
            f"in-service network is not connected: {ncomp} islands (e.g. bus {stray[0]} is cut off from bus {case.buses[0].id})"
        )


# ---------------------------------------------------------------------------
# loaders

def parse_case(path) -> NetworkCase:
    """Load a case file; ``.m`` is read as MATPOWER, ``.json/.yaml/.yml`` as native."""
    path = Path(path)
    if not path.is_file():
        raise CaseParseError("file not found", path=path)
    text = path.read_text()
    if path.suffix.lower() == ".m":
        return parse_matpower(text, path=path)
    if path.suffix.lower() in (".json", ".yaml", ".yml"):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise CaseParseError(str(exc).splitlines()[0], path=path,
                                 line=mark.line + 1 if mark is not None else None) from exc
        return case_from_dict(data, path=path)
    raise CaseParseError(f"unrecognized case file extension '{path.suffix}'", path=path)


def _get(record: Mapping, key: str, where: str, path, *, default=..., cast=float):
    if key not in record:
        if default is ...:
            raise CaseParseError(f"missing required key in {where}", path=path, field=key)
        return default
    try:
        return cast(record[key])
    except (TypeError, ValueError) as exc:
        raise CaseParseError(f"bad value {record[key]!r} in {where}", path=path, field=key) from exc


def _as_bool(value) -> bool:
    if isinstance(value, str):
        return value.strip().lower() not in ("0", "false", "off", "no")
    return bool(value)


def case_from_dict(data: Mapping[str, Any], *, path=None) -> NetworkCase:
    """Build a case from the native mapping schema (see module docstring)."""
    if not isinstance(data, Mapping):
        raise CaseParseError("top level must be a mapping", path=path)
    for key in ("buses", "branches", "generators"):
        if not isinstance(data.get(key), list):
            raise CaseParseError("missing or non-list section", path=path, field=key)

    gens = []
    for k, rec in enumerate(data["generators"]):
        where = f"generators[{k}]"
        if not isinstance(rec, Mapping):
            raise CaseParseError(f"{where} must be a mapping", path=path)
        try:
            params = ParamSet().merged(rec.get("params"))
        except CaseValidationError as exc:
            raise CaseParseError(f"{where}: {exc}", path=path, field="params") from exc
        gens.append(Generator(
            bus=_get(rec, "bus", where, path, cast=int),
            rating_mva=_get(rec, "rating_mva", where, path),
            kind=str(rec.get("kind", SG)).lower(),
            p_mw=_get(rec, "p_mw", where, path, default=0.0),
            v_pu=_get(rec, "v_pu", where, path, default=1.0),
            params=params,
        ))
    gen_buses = {g.bus for g in gens}

    buses = []
    for k, rec in enumerate(data["buses"]):
        where = f"buses[{k}]"
        bid = _get(rec, "id", where, path, cast=int)
        btype = str(rec.get("type", GENERATOR if bid in gen_buses else LOAD)).lower()
        buses.append(Bus(bid, btype, _get(rec, "base_kv", where, path, default=0.0)))

    branches = []
    for k, rec in enumerate(data["branches"]):
        where = f"branches[{k}]"
        branches.append(Branch(
            _get(rec, "from", where, path, cast=int),
            _get(rec, "to", where, path, cast=int),
            _get(rec, "x", where, path),
            _as_bool(rec.get("status", True)),
        ))

    loads = []
    for k, rec in enumerate(data.get("loads") or []):
        where = f"loads[{k}]"
        loads.append(Load(
            _get(rec, "bus", where, path, cast=int),
            _get(rec, "p_mw", where, path, default=0.0),
            _get(rec, "q_mvar", where, path, default=0.0),
        ))

    return NetworkCase(
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(gens),
        loads=tuple(loads),
        base_mva=_get(data, "base_mva", "case", path, default=100.0),
        name=str(data.get("name", Path(path).stem if path else "case")),
    )


def case_to_dict(case: NetworkCase) -> dict:
    return {
        "name": case.name,
        "base_mva": case.base_mva,
        "buses": [{"id": b.id, "type": b.type, "base_kv": b.base_kv} for b in case.buses],
        "branches": [{"from": br.from_bus, "to": br.to_bus, "x": br.x, "status": int(br.status)}
                     for br in case.branches],
        "generators": [{"bus": g.bus, "rating_mva": g.rating_mva, "kind": g.kind, "p_mw": g.p_mw,
                        "v_pu": g.v_pu, "params": g.params.to_dict()} for g in case.generators],
        "loads": [{"bus": ld.bus, "p_mw": ld.p_mw, "q_mvar": ld.q_mvar} for ld in case.loads],
    }


# MATPOWER column positions (0-based)
_BUS_I, _BUS_TYPE, _PD, _QD, _BASE_KV = 0, 1, 2, 3, 9
_GEN_BUS, _PG, _VG, _MBASE, _GEN_STATUS = 0, 1, 5, 6, 7
_F_BUS, _T_BUS, _BR_X, _BR_STATUS = 0, 1, 3, 10

_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[")
_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([^;\[]+);")


def _matpower_tables(text: str, path) -> tuple[dict[str, list[tuple[int, list[float]]]], dict[str, str]]:
    """Extract ``mpc.<name> = [ ... ];`` tables as rows tagged with their source line."""
    lines = text.splitlines()
    tables: dict[str, list[tuple[int, list[float]]]] = {}
    scalars: dict[str, str] = {}
    current = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("%", 1)[0].replace("...", " ")
        if current is None:
            m = _SCALAR_RE.search(line)
            if m:
                scalars[m.group(1)] = m.group(2).strip()
                continue
            m = _MATRIX_RE.search(line)
            if not m:
                continue
            current = m.group(1)
            tables[current] = []
            line = line[m.end():]
        closing = "]" in line
        body = line.split("]", 1)[0]
        for chunk in body.split(";"):
            tokens = chunk.replace(",", " ").split()
            if not tokens:
                continue
            if tokens[0].startswith("'") or tokens[0].startswith('"'):
                # cell arrays of strings (e.g. bus_name) are ignored
                break
            try:
                tables[current].append((lineno, [float(t) for t in tokens]))
            except ValueError as exc:
                bad = next(t for t in tokens if not _is_number(t))
                raise CaseParseError(f"non-numeric entry {bad!r} in mpc.{current}",
                                     path=path, line=lineno) from exc
        if closing:
            current = None
    if current is not None:
        raise CaseParseError(f"unterminated matrix mpc.{current}", path=path, line=len(lines))
    return tables, scalars


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def parse_matpower(text: str, *, path=None) -> NetworkCase:
    """Read a MATPOWER ``.m`` case (version 2 column layout).

    Generators take their rating from the ``mBase`` column and default to
    kind ``sg``; out-of-service generators and branches are skipped, isolated
    (type 4) buses are dropped.
    """
    tables, scalars = _matpower_tables(text, path)
    for name in ("bus", "gen", "branch"):
        if name not in tables:
            raise CaseParseError(f"missing mpc.{name} table", path=path, field=name)
    try:
        base = float(scalars.get("baseMVA", "100"))
    except ValueError as exc:
        raise CaseParseError("bad baseMVA", path=path, field="baseMVA") from exc

    def need(row, lineno, ncols, table):
        if len(row) < ncols:
            raise CaseParseError(f"mpc.{table} row has {len(row)} columns, need at least {ncols}",
                                 path=path, line=lineno)

    bus_rows = []
    for lineno, row in tables["bus"]:
        need(row, lineno, 4, "bus")
        if int(row[_BUS_TYPE]) == 4:
            continue
        bus_rows.append((lineno, row))
    live_buses = {int(r[_BUS_I]) for _, r in bus_rows}

    gens = []
    for lineno, row in tables["gen"]:
        need(row, lineno, 6, "gen")
        if len(row) > _GEN_STATUS and row[_GEN_STATUS] <= 0:
            continue
        bus = int(row[_GEN_BUS])
        mbase = row[_MBASE] if len(row) > _MBASE and row[_MBASE] > 0 else base
        gens.append(Generator(bus=bus, rating_mva=mbase, kind=SG, p_mw=row[_PG], v_pu=row[_VG]))
    gen_buses = {g.bus for g in gens}

    buses, loads = [], []
    for lineno, row in bus_rows:
        bid = int(row[_BUS_I])
        kv = row[_BASE_KV] if len(row) > _BASE_KV else 0.0
        buses.append(Bus(bid, GENERATOR if bid in gen_buses else LOAD, kv))
        if row[_PD] != 0 or row[_QD] != 0:
            loads.append(Load(bid, row[_PD], row[_QD]))

    branches = []
    for lineno, row in tables["branch"]:
        need(row, lineno, 4, "branch")
        status = row[_BR_STATUS] > 0 if len(row) > _BR_STATUS else True
        f, t = int(row[_F_BUS]), int(row[_T_BUS])
        if not status or f not in live_buses and t not in live_buses:
            continue
        branches.append(Branch(f, t, row[_BR_X], status))

    return NetworkCase(
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(gens),
        loads=tuple(loads),
        base_mva=base,
        name=Path(path).stem if path else "matpower",
    )


def with_generators(case: NetworkCase, generators: Iterable[Generator]) -> NetworkCase:
    return NetworkCase(case.buses, case.branches, tuple(generators), case.loads, case.base_mva, case.name)


def load_param_file(path) -> dict[int | str, dict]:
    """Parameter file keyed by generator bus id (``default`` applies to every bus)."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise CaseParseError(str(exc).splitlines()[0], path=path) from exc
    if not isinstance(data, Mapping):
        raise CaseParseError("parameter file must be a mapping keyed by bus id", path=path)
    out: dict[int | str, dict] = {}
    for key, rec in data.items():
        if str(key) == "default":
            out["default"] = dict(rec)
            continue
        try:
            out[int(key)] = dict(rec)
        except (TypeError, ValueError) as exc:
            raise CaseParseError(f"bad bus key {key!r}", path=path, field=str(key)) from exc
    return out


def apply_params(case: NetworkCase, records: Mapping[int | str, Mapping[str, Any]]) -> NetworkCase:
    """Fold parameter records into the case generators (``default`` first, then per bus)."""
    default = records.get("default")
    unknown = [k for k in records if k != "default" and k not in set(case.gen_index)]
    if unknown:
        raise CaseValidationError(f"parameter records for non-generator buses {unknown}")
    gens = []
    for g in case.generators:
        params = g.params.merged(default).merged(records.get(g.bus))
        gens.append(Generator(g.bus, g.rating_mva, g.kind, g.p_mw, g.v_pu, params))
    return with_generators(case, gens)


def reorder_buses(case: NetworkCase, order: Sequence[int]) -> NetworkCase:
    pos = {b.id: b for b in case.buses}
    return NetworkCase(tuple(pos[i] for i in order), case.branches, case.generators, case.loads,
                       case.base_mva, case.name)
