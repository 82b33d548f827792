"""Random connected test networks of arbitrary size."""

from __future__ import annotations

import numpy as np

from .case import GENERATOR, LOAD, Branch, Bus, Generator, Load, NetworkCase


def synthetic_case(n_bus: int = 2000, n_gen: int = 500, *, extra_branch_ratio: float = 0.4,
                   kind: str = "sg", seed: int = 0, name: str | None = None) -> NetworkCase:
    """Connected network: a random spanning tree plus ``extra_branch_ratio * n_bus`` chords.

    Reactances are drawn from [0.01, 0.1] pu, ratings from [100, 1000] MVA and
    every load bus carries 10-100 MW.
    """
    if not 1 <= n_gen <= n_bus:
        raise ValueError("need 1 <= n_gen <= n_bus")
    rng = np.random.default_rng(seed)
    ids = np.arange(1, n_bus + 1)
    gen_buses = set(rng.choice(ids, size=n_gen, replace=False).tolist())
    edges = set()
    order = rng.permutation(ids)
    for k in range(1, n_bus):
        a, b = int(order[k]), int(order[rng.integers(0, k)])
        edges.add((min(a, b), max(a, b)))
    target = len(edges) + int(extra_branch_ratio * n_bus)
    while len(edges) < target:
        a, b = (int(v) for v in rng.choice(ids, size=2, replace=False))
        edges.add((min(a, b), max(a, b)))
    edges = sorted(edges)
    xs = rng.uniform(0.01, 0.1, size=len(edges))
    buses = tuple(Bus(int(i), GENERATOR if int(i) in gen_buses else LOAD, 230.0) for i in ids)
    branches = tuple(Branch(a, b, float(x)) for (a, b), x in zip(edges, xs))
    ratings = rng.uniform(100.0, 1000.0, size=n_bus)
    generators = tuple(Generator(int(i), float(ratings[i - 1]), kind) for i in ids if int(i) in gen_buses)
    loads = tuple(Load(int(i), float(rng.uniform(10.0, 100.0)), 0.0) for i in ids if int(i) not in gen_buses)
    return NetworkCase(buses, branches, generators, loads, 100.0, name or f"synthetic{n_bus}")
