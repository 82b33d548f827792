"""Network-coupled frequency model of mixed SG/GFM systems.

State vector: relative angles of generators 1..n-1 to the reference (the last
generator in ``gen_index``), then all n frequency deviations, then the
mechanical power states of the SGs in ``gen_index`` order. The input is the
vector of load-bus injection changes (pu on S_B).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .devices import Constants, Device, GfmDevice, SgDevice, alpha, droop_stiffness
from .errors import AssemblyError
from .lti import LtiModel
from .network import ReducedNetwork


@dataclass(frozen=True)
class DisturbanceSpec:
    """Step change of injection at one bus at t = 0.

    A load increase of L MW is ``p_mw = -L``.
    """

    bus: int
    p_mw: float = 0.0
    q_mvar: float = 0.0
    start_s: float = 0.0

    def __post_init__(self):
        if self.p_mw == 0 and self.q_mvar == 0:
            raise AssemblyError("disturbance must change P or Q")
        if self.start_s != 0:
            raise AssemblyError("only disturbances starting at t = 0 are supported")

    @classmethod
    def load_step(cls, bus: int, p_mw: float, q_mvar: float = 0.0) -> "DisturbanceSpec":
        return cls(bus, -p_mw, -q_mvar)


def _check_devices(net: ReducedNetwork, devices) -> None:
    buses = tuple(d.bus for d in devices)
    if buses != tuple(net.gen_index):
        raise AssemblyError(f"device buses {list(buses)} do not match generator buses {list(net.gen_index)}")
    if len(devices) < 2:
        raise AssemblyError("the frequency model needs at least two generators")


def load_input(net: ReducedNetwork, disturbance: DisturbanceSpec, s_base: float) -> np.ndarray:
    if disturbance.bus in net.gen_index:
        raise AssemblyError(
            f"disturbance at generator bus {disturbance.bus} is not supported; attach it to a stub load bus"
        )
    if disturbance.bus not in net.load_index:
        raise AssemblyError(f"disturbance bus {disturbance.bus} is not in the network")
    u = np.zeros(len(net.load_index))
    u[net.load_index.index(disturbance.bus)] = disturbance.p_mw / s_base
    return u


def frequency_state_labels(devices) -> tuple[tuple[str, int], ...]:
    n = len(devices)
    labels = [("delta_rel", d.bus) for d in devices[: n - 1]]
    labels += [("omega", d.bus) for d in devices]
    labels += [("P_M", d.bus) for d in devices if isinstance(d, SgDevice)]
    return tuple(labels)


def assemble_frequency_model(net: ReducedNetwork, devices: list[Device], disturbance: DisturbanceSpec | None,
                             s_base: float, constants: Constants = Constants()) -> LtiModel:
    """Build (A_f, B_f, u) from the reduced network and device list.

    ``devices`` must follow ``net.gen_index``. With ``disturbance=None`` the
    input vector is zero (useful when only A_f/B_f are wanted).
    """
    _check_devices(net, devices)
    n = len(devices)
    sgs = [i for i, d in enumerate(devices) if isinstance(d, SgDevice)]
    ng = len(sgs)
    ns = (n - 1) + n + ng
    w0 = constants.omega0
    d_idx = np.arange(n - 1)
    w_idx = (n - 1) + np.arange(n)
    pm_of = {i: 2 * n - 1 + k for k, i in enumerate(sgs)}

    A = np.zeros((ns, ns))
    # relative angle rows: -D' (SG only) and omega0 * (w_i - w_n)
    for i in range(n - 1):
        if isinstance(devices[i], SgDevice):
            A[i, i] = -constants.d_prime
        A[i, w_idx[i]] = w0
        A[i, w_idx[n - 1]] = -w0

    B_r_tilde = net.B_r[:, : n - 1]
    gamma = np.zeros(n)
    for i, dev in enumerate(devices):
        a = alpha(s_base, dev.rating_mva)
        row = w_idx[i]
        if isinstance(dev, SgDevice):
            f = dev.freq
            coupling = a / f.M
            A[row, row] = -f.D / f.M
            A[row, pm_of[i]] = -1.0 / f.M
            A[pm_of[i], row] = f.K / (f.T_SG * f.R_SG)
            A[pm_of[i], pm_of[i]] = -1.0 / f.T_SG
        elif isinstance(dev, GfmDevice):
            f = dev.freq
            coupling = a * f.R / f.T_c
            A[row, row] = -1.0 / f.T_c
        else:
            raise AssemblyError(f"unsupported device {dev!r}")
        A[row, d_idx] = -coupling * B_r_tilde[i]
        gamma[i] = coupling

    B = np.zeros((ns, len(net.load_index)))
    B[w_idx, :] = gamma[:, None] * net.B_L

    u = np.zeros(len(net.load_index)) if disturbance is None else load_input(net, disturbance, s_base)
    return LtiModel(A, B, u, frequency_state_labels(devices), tuple(net.load_index))


def steady_state_frequency(devices: list[Device], total_dP_L: float, s_base: float) -> float:
    """Common post-disturbance frequency deviation (pu): -sum(dP_L) / sum(c_i)."""
    stiffness = sum(droop_stiffness(d, s_base) for d in devices)
    if not stiffness > 0:
        raise AssemblyError("total droop stiffness is zero; no steady state exists")
    return -total_dP_L / stiffness


def frequency_dimension(n_generators: int, n_sg: int) -> int:
    return 2 * n_generators - 1 + n_sg
