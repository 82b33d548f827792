"""Shared case builders and scenario definitions for the test suite."""

from __future__ import annotations

from importlib import resources

import numpy as np

from lowinertia.case import GENERATOR, LOAD, Branch, Bus, Generator, Load, NetworkCase, parse_case
from lowinertia.devices import Constants
from lowinertia.frequency import DisturbanceSpec, assemble_frequency_model
from lowinertia.network import reduce_case
from lowinertia.scenario import replacement_kinds
from lowinertia.voltage import assemble_voltage_model, estimate_reactive_disturbance


def builtin(name: str) -> NetworkCase:
    with resources.as_file(resources.files("lowinertia") / "data" / f"{name}.m") as p:
        return parse_case(p)


def chain3(x12=0.1, x23=0.1, load_mw=100.0, kinds=("sg", "sg")) -> NetworkCase:
    """1 - 2 - 3 chain, generators at the ends, load in the middle."""
    return NetworkCase(
        buses=(Bus(1, GENERATOR), Bus(2, LOAD), Bus(3, GENERATOR)),
        branches=(Branch(1, 2, x12), Branch(2, 3, x23)),
        generators=(Generator(1, 100.0, kinds[0]), Generator(3, 100.0, kinds[1])),
        loads=(Load(2, load_mw),),
    )


def two_bus(load_mw=50.0, x=0.1) -> NetworkCase:
    return NetworkCase(
        buses=(Bus(1, GENERATOR), Bus(2, LOAD)),
        branches=(Branch(1, 2, x),),
        generators=(Generator(1, 100.0),),
        loads=(Load(2, load_mw),),
    )


def random_case(rng: np.random.Generator, n_bus: int, n_gen: int | None = None) -> NetworkCase:
    """Random connected case: spanning tree plus a few chords, random reactances and ratings."""
    n_gen = n_gen if n_gen is not None else int(rng.integers(2, max(3, n_bus // 2) + 1))
    n_gen = min(max(n_gen, 2), n_bus)
    ids = [int(i) for i in rng.permutation(np.arange(1, n_bus + 1) * 3)]
    gens = set(rng.choice(ids, size=n_gen, replace=False).tolist())
    edges = {}
    for k in range(1, n_bus):
        a, b = ids[k], ids[int(rng.integers(0, k))]
        edges[(a, b)] = float(rng.uniform(0.02, 0.5))
    for _ in range(int(rng.integers(0, n_bus))):
        a, b = (int(v) for v in rng.choice(ids, size=2, replace=False))
        edges.setdefault((a, b), float(rng.uniform(0.02, 0.5)))
    buses = tuple(Bus(i, GENERATOR if i in gens else LOAD) for i in ids)
    branches = tuple(Branch(a, b, x) for (a, b), x in edges.items())
    generators = tuple(Generator(i, float(rng.uniform(50, 500)), str(rng.choice(["sg", "gfm"])))
                       for i in ids if i in gens)
    loads = tuple(Load(i, float(rng.uniform(0, 100))) for i in ids if i not in gens)
    return NetworkCase(buses, branches, generators, loads)


# The five oracle-equivalence scenarios: (label, case, GFM buses, disturbance)
NINE_BUS_STEP = DisturbanceSpec.load_step(5, 100.0)
THIRTY_NINE_STEP = DisturbanceSpec.load_step(15, 307.5, 140.88)


def acceptance_scenarios():
    c9 = builtin("case9")
    c39 = builtin("case39")
    out = [
        ("9-bus 3 SG", c9, {}, NINE_BUS_STEP),
        ("9-bus 2 SG + 1 GFM", c9, {3: "gfm"}, NINE_BUS_STEP),
        ("9-bus 1 SG + 2 GFM", c9, {2: "gfm", 3: "gfm"}, NINE_BUS_STEP),
        ("39-bus 7 SG + 3 GFM", c39, replacement_kinds(c39, 30), THIRTY_NINE_STEP),
        ("39-bus 3 SG + 7 GFM", c39, replacement_kinds(c39, 70), THIRTY_NINE_STEP),
    ]
    return out


def frequency_model(case, kinds, dist, d_prime=0.05):
    devices = case.devices(kinds)
    return assemble_frequency_model(reduce_case(case), devices, dist, case.base_mva,
                                    Constants(d_prime=d_prime)), devices


def voltage_model(case, kinds, dist):
    devices = case.devices(kinds)
    rq = estimate_reactive_disturbance(case, dist, devices)
    return assemble_voltage_model(devices, rq, case.base_mva), devices, rq
