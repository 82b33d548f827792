"""Reactive disturbance estimate and the decoupled voltage model.

States are the terminal-voltage deviations of every generator followed by the
PI integrator states of the SGs. GFMs carry no integrator state, so the model
has ``2 * n_SG + n_GFM`` states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .case import NetworkCase
from .devices import Device, GfmDevice, SgDevice, alpha
from .errors import AssemblyError
from .frequency import DisturbanceSpec
from .lti import LtiModel
from .powerflow import PowerFlowSolution, default_participation, reactive_setpoints, solve_ac_powerflow


@dataclass(frozen=True)
class ReactiveDisturbance:
    dQ_G: np.ndarray  # pu, gen_index order
    gen_index: tuple[int, ...]
    base: PowerFlowSolution | None = None
    post: PowerFlowSolution | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.dQ_G)):
            raise AssemblyError("reactive disturbance has non-finite entries")


def estimate_reactive_disturbance(case: NetworkCase, disturbance: DisturbanceSpec | None,
                                  devices: list[Device] | None = None, **pf_options) -> ReactiveDisturbance:
    """Per-generator change in reactive output between the base and post-disturbance flows.

    The post-disturbance flow applies both the P and Q steps at the disturbance
    bus; the active imbalance is shared in proportion to each device's droop
    stiffness, and it is warm-started from the base solution.
    """
    gen_index = tuple(case.gen_index)
    if disturbance is None:
        return ReactiveDisturbance(np.zeros(len(gen_index)), gen_index)
    if disturbance.bus not in case.bus_ids:
        raise AssemblyError(f"disturbance bus {disturbance.bus} is not in the case")
    weights = default_participation(case, devices)
    p_load, q_load = case.bus_loads_pu()
    base = solve_ac_powerflow(case, (p_load, q_load), participation=weights, stage="base", **pf_options)
    k = case.bus_ids.index(disturbance.bus)
    p_post, q_post = p_load.copy(), q_load.copy()
    # injection change -> consumption change
    p_post[k] -= disturbance.p_mw / case.base_mva
    q_post[k] -= disturbance.q_mvar / case.base_mva
    post = solve_ac_powerflow(case, (p_post, q_post), participation=weights,
                              start=(base.V, base.theta, base.slack), stage="post", **pf_options)
    dQ = reactive_setpoints(post) - reactive_setpoints(base)
    return ReactiveDisturbance(dQ, gen_index, base, post)


def voltage_state_labels(devices) -> tuple[tuple[str, int], ...]:
    return tuple([("dV", d.bus) for d in devices] + [("x_PI", d.bus) for d in devices if isinstance(d, SgDevice)])


def assemble_voltage_model(devices: list[Device], dist: ReactiveDisturbance | np.ndarray,
                           s_base: float) -> LtiModel:
    dQ = np.asarray(dist.dQ_G if isinstance(dist, ReactiveDisturbance) else dist, float)
    n = len(devices)
    if dQ.shape != (n,):
        raise AssemblyError(f"reactive disturbance has {dQ.shape[0] if dQ.ndim else 0} entries for {n} devices")
    if isinstance(dist, ReactiveDisturbance) and tuple(d.bus for d in devices) != dist.gen_index:
        raise AssemblyError("device order does not match the reactive disturbance ordering")
    sgs = [i for i, d in enumerate(devices) if isinstance(d, SgDevice)]
    ns = n + len(sgs)
    A = np.zeros((ns, ns))
    B = np.zeros((ns, n))
    for i, dev in enumerate(devices):
        a = alpha(s_base, dev.rating_mva)
        if isinstance(dev, SgDevice):
            p = dev.volt
            j = n + sgs.index(i)
            A[i, i] = -(p.G * p.K_P + 1.0) / p.T_G
            A[i, j] = -p.G * p.K_I / p.T_G
            A[j, i] = 1.0 / p.T_I
            B[i, i] = a * p.G / p.T_G
        elif isinstance(dev, GfmDevice):
            p = dev.volt
            A[i, i] = -1.0 / p.T_q
            B[i, i] = a * p.R_q / p.T_q
        else:
            raise AssemblyError(f"unsupported device {dev!r}")
    return LtiModel(A, B, dQ, voltage_state_labels(devices), tuple(d.bus for d in devices))


def voltage_dimension(n_sg: int, n_gfm: int) -> int:
    return 2 * n_sg + n_gfm
