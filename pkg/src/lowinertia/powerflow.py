"""Newton-Raphson AC power flow with distributed slack.

Every generator bus is PV. One reference bus fixes the angle; the active-power
imbalance is shared through a scalar slack ``lam`` so that generator ``i``
produces ``P_set_i + w_i * lam`` with normalized participation weights ``w``.
Branches are modelled by series reactance only (y = 1/(j x)), which matches the
DC network data used by the frequency model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .case import NetworkCase
from .devices import Device, droop_stiffness
from .errors import PowerFlowError
from .network import laplacian

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 30


@dataclass(frozen=True)
class PowerFlowSolution:
    bus_ids: tuple[int, ...]
    V: np.ndarray
    theta: np.ndarray
    gen_index: tuple[int, ...]
    P_G: np.ndarray
    Q_G: np.ndarray
    slack: float
    converged: bool
    iterations: int
    max_mismatch: float

    def voltage_at(self, bus: int) -> complex:
        k = self.bus_ids.index(bus)
        return self.V[k] * np.exp(1j * self.theta[k])


def admittance(case: NetworkCase) -> sp.csr_matrix:
    """Bus admittance matrix of the series reactances, in bus-table order."""
    return (-1j * laplacian(case)).tocsr()


def _dS_dV(Y, V):
    """Partial derivatives of complex bus injections w.r.t. angle and magnitude."""
    I = Y @ V
    diagV = sp.diags(V)
    diagI = sp.diags(I)
    diagVn = sp.diags(V / np.abs(V))
    dS_dVa = 1j * diagV @ np.conj(diagI - Y @ diagV)
    dS_dVm = diagV @ np.conj(Y @ diagVn) + np.conj(diagI) @ diagVn
    return dS_dVa, dS_dVm


def default_participation(case: NetworkCase, devices: list[Device] | None = None) -> np.ndarray:
    devices = devices if devices is not None else case.devices()
    return np.array([droop_stiffness(d, case.base_mva) for d in devices])


def solve_ac_powerflow(case: NetworkCase, loads=None, gen_dispatch=None, participation=None, *,
                       reference_bus: int | None = None, start=None,
                       tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                       stage: str | None = None) -> PowerFlowSolution:
    """Solve the polar power-flow equations.

    ``loads`` is a pair of per-bus (P, Q) consumption arrays in pu (bus-table
    order); ``gen_dispatch`` a pair of (P pu, |V| pu) arrays in ``gen_index``
    order; ``participation`` nonnegative slack weights in ``gen_index`` order.
    ``start`` is an optional warm start ``(V, theta, slack)``.
    """
    bus_ids = case.bus_ids
    nb = len(bus_ids)
    pos = {b: i for i, b in enumerate(bus_ids)}
    gen_index = case.gen_index
    gpos = np.array([pos[b] for b in gen_index], dtype=int)

    p_load, q_load = case.bus_loads_pu() if loads is None else (np.asarray(loads[0], float), np.asarray(loads[1], float))
    if gen_dispatch is None:
        gens = case.generators_ordered()
        p_set = np.array([g.p_mw / case.base_mva for g in gens])
        v_set = np.array([g.v_pu for g in gens])
    else:
        p_set, v_set = (np.asarray(a, float) for a in gen_dispatch)
    w = default_participation(case) if participation is None else np.asarray(participation, float)
    if np.any(w < 0) or not w.sum() > 0:
        raise PowerFlowError("participation weights must be nonnegative with a positive sum", stage=stage)
    w = w / w.sum()

    ref = pos[gen_index[0] if reference_bus is None else reference_bus]
    if ref not in set(gpos):
        raise PowerFlowError(f"reference bus {bus_ids[ref]} is not a generator bus", stage=stage)
    is_pv = np.zeros(nb, bool)
    is_pv[gpos] = True
    pq = np.flatnonzero(~is_pv)
    non_ref = np.array([i for i in range(nb) if i != ref], dtype=int)

    Y = admittance(case)
    p_gen_bus = np.zeros(nb)
    p_gen_bus[gpos] = p_set
    w_bus = np.zeros(nb)
    w_bus[gpos] = w

    if start is None:
        Vm = np.ones(nb)
        Va = np.zeros(nb)
        lam = 0.0
    else:
        Vm, Va, lam = np.array(start[0], float), np.array(start[1], float), float(start[2])
    Vm[gpos] = v_set

    n_th, n_v = len(non_ref), len(pq)

    def mismatch(Vm, Va, lam):
        V = Vm * np.exp(1j * Va)
        S = V * np.conj(Y @ V)
        dP = S.real - (p_gen_bus + w_bus * lam - p_load)
        dQ = S.imag[pq] + q_load[pq]
        return V, np.concatenate([dP, dQ])

    V, F = mismatch(Vm, Va, lam)
    norm = np.abs(F).max(initial=0.0)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if norm < tol:
            break
        dS_dVa, dS_dVm = _dS_dV(Y, V)
        J = sp.bmat([
            [dS_dVa.real[:, non_ref], dS_dVm.real[:, pq], sp.csr_matrix(-w_bus[:, None])],
            [dS_dVa.imag[pq][:, non_ref], dS_dVm.imag[pq][:, pq], None],
        ], format="csc")
        if J.shape[1] != n_th + n_v + 1:
            raise PowerFlowError("Jacobian has the wrong shape", stage=stage)
        with np.errstate(all="ignore"):
            try:
                dx = spla.spsolve(J, -F)
            except RuntimeError as exc:
                raise PowerFlowError(f"singular Jacobian: {exc}", stage=stage, iterations=iterations,
                                     mismatch=norm) from exc
        if not np.all(np.isfinite(dx)):
            raise PowerFlowError("singular Jacobian", stage=stage, iterations=iterations, mismatch=norm)
        Va[non_ref] += dx[:n_th]
        Vm[pq] += dx[n_th:n_th + n_v]
        lam += dx[-1]
        V, F = mismatch(Vm, Va, lam)
        norm = np.abs(F).max(initial=0.0)
    else:
        if not norm < tol:
            raise PowerFlowError(f"no convergence after {max_iter} iterations (mismatch {norm:.3e} pu)",
                                 stage=stage, iterations=max_iter, mismatch=norm)

    S = V * np.conj(Y @ V)
    P_G = S.real[gpos] + p_load[gpos]
    Q_G = S.imag[gpos] + q_load[gpos]
    return PowerFlowSolution(
        bus_ids=tuple(bus_ids), V=np.abs(V), theta=np.angle(V), gen_index=tuple(gen_index),
        P_G=P_G, Q_G=Q_G, slack=lam, converged=True, iterations=iterations, max_mismatch=norm,
    )


def reactive_setpoints(sol: PowerFlowSolution) -> np.ndarray:
    if not sol.converged:
        raise PowerFlowError("power flow solution did not converge")
    return sol.Q_G.copy()
