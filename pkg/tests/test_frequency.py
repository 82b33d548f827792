import numpy as np
import pytest

from lowinertia.case import reorder_buses
from lowinertia.devices import Constants, make_device
from lowinertia.errors import AssemblyError
from lowinertia.frequency import (DisturbanceSpec, assemble_frequency_model, frequency_dimension,
                                  steady_state_frequency)
from lowinertia.lti import eigen_diagnostics, solve_analytic
from lowinertia.network import reduce_case

from support import builtin, chain3, frequency_model, random_case


def test_two_sg_layout():
    case = chain3()
    model, _ = frequency_model(case, {}, DisturbanceSpec.load_step(2, 10))
    assert model.A.shape == (5, 5)
    assert model.state_labels == (("delta_rel", 1), ("omega", 1), ("omega", 3), ("P_M", 1), ("P_M", 3))
    np.testing.assert_allclose(model.u, [-0.1])


def test_nine_bus_one_sg_two_gfm_dimension():
    model, _ = frequency_model(builtin("case9"), {2: "gfm", 3: "gfm"}, DisturbanceSpec.load_step(5, 100))
    assert model.n_states == 6 == frequency_dimension(3, 1)


def test_all_gfm_chain_is_stable():
    case = chain3(kinds=("gfm", "gfm"))
    model, _ = frequency_model(case, {}, DisturbanceSpec.load_step(2, 10))
    assert model.n_states == 3
    assert not model.rows("P_M").size
    assert eigen_diagnostics(model).status == "stable"


def test_three_gfm_dimension():
    case = builtin("case9")
    model, _ = frequency_model(case, {1: "gfm", 2: "gfm", 3: "gfm"}, DisturbanceSpec.load_step(5, 100))
    assert model.n_states == 5


@pytest.mark.parametrize("kinds", [{}, {1: "gfm"}, {1: "gfm", 2: "gfm"}])
def test_dimension_law_drops_one_per_replacement(kinds):
    model, devices = frequency_model(builtin("case9"), kinds, DisturbanceSpec.load_step(5, 100))
    n_sg = sum(d.kind == "sg" for d in devices)
    assert model.n_states == 2 * 3 - 1 + n_sg


def test_single_device_steady_states():
    assert steady_state_frequency([make_device("sg", 1, 100.0)], -0.1, 100.0) == pytest.approx(0.1 / 21)
    assert steady_state_frequency([make_device("gfm", 1, 100.0)], -0.1, 100.0) == pytest.approx(0.005)
    assert steady_state_frequency([make_device("sg", 1, 100.0)], 0.0, 100.0) == 0.0


def test_block_exactness():
    case = builtin("case9")
    model, devices = frequency_model(case, {2: "gfm"}, DisturbanceSpec.load_step(5, 100))
    net = reduce_case(case)
    c = Constants()
    A, B = model.A, model.B
    n = 3
    sg, gfm = devices[0], devices[1]
    w = {d.bus: (n - 1) + i for i, d in enumerate(devices)}
    pm = {1: 5, 3: 6}
    # SG row at bus 1 (alpha = 1 on the 100 MVA ratings)
    f = sg.freq
    assert A[w[1], w[1]] == -f.D / f.M
    assert A[w[1], pm[1]] == -1 / f.M
    assert A[pm[1], w[1]] == f.K / (f.T_SG * f.R_SG)
    assert A[pm[1], pm[1]] == -1 / f.T_SG
    np.testing.assert_array_equal(A[w[1], :2], -(1 / f.M) * net.B_r[0, :2])
    np.testing.assert_array_equal(B[w[1]], (1 / f.M) * net.B_L[0])
    # GFM row at bus 2
    g = gfm.freq
    assert A[w[2], w[2]] == -1 / g.T_c
    np.testing.assert_array_equal(A[w[2], :2], -(g.R / g.T_c) * net.B_r[1, :2])
    np.testing.assert_array_equal(B[w[2]], (g.R / g.T_c) * net.B_L[1])
    assert not A[w[2], 5:].any()
    # relative-angle rows: D' only on SG rows
    assert A[0, 0] == -c.d_prime and A[1, 1] == 0.0
    assert A[0, w[1]] == c.omega0 and A[0, w[3]] == -c.omega0


def _omega_by_bus(model, t_end=20.0):
    traj = solve_analytic(model, t_end, 0.1)
    buses, rows = traj.select("omega")
    return dict(zip(buses, rows))


@pytest.mark.parametrize("seed", range(5))
def test_reference_invariance(seed):
    rng = np.random.default_rng(100 + seed)
    case = random_case(rng, 12, 4)
    dist = DisturbanceSpec.load_step(case.load_index[0], 50)
    base, _ = frequency_model(case, {}, dist, d_prime=0.0)
    # move a different generator to the end of the bus table, making it the reference
    order = [b for b in case.bus_ids if b != case.gen_index[0]] + [case.gen_index[0]]
    other, _ = frequency_model(reorder_buses(case, order), {}, dist, d_prime=0.0)
    a, b = _omega_by_bus(base), _omega_by_bus(other)
    for bus in a:
        np.testing.assert_allclose(a[bus], b[bus], atol=1e-8)


@pytest.mark.parametrize("kinds", [{}, {2: "gfm"}, {2: "gfm", 3: "gfm"}])
def test_synchronization_and_droop_law(kinds):
    case = builtin("case9")
    dist = DisturbanceSpec.load_step(5, 100)
    model, devices = frequency_model(case, kinds, dist, d_prime=0.0)
    target = steady_state_frequency(devices, dist.p_mw / case.base_mva, case.base_mva)
    slow = 1 / min(-l.real for l in np.linalg.eigvals(model.A) if abs(l) > 1e-9)
    traj = solve_analytic(model, 10 * slow, 0.5)
    _, omega = traj.select("omega")
    final = omega[:, -1]
    assert np.ptp(final) < 1e-6
    np.testing.assert_allclose(final, target, atol=1e-6)


def test_disturbance_validation():
    with pytest.raises(AssemblyError):
        DisturbanceSpec(5, 0.0, 0.0)
    assert DisturbanceSpec.load_step(5, 10, 3) == DisturbanceSpec(5, -10, -3)
    case = builtin("case9")
    with pytest.raises(AssemblyError, match="generator bus"):
        frequency_model(case, {}, DisturbanceSpec.load_step(1, 10))
    with pytest.raises(AssemblyError, match="not in the network"):
        frequency_model(case, {}, DisturbanceSpec.load_step(42, 10))


def test_device_order_must_match():
    case = builtin("case9")
    devices = case.devices()[::-1]
    with pytest.raises(AssemblyError):
        assemble_frequency_model(reduce_case(case), devices, None, case.base_mva)


def test_no_disturbance_gives_zero_input():
    case = builtin("case9")
    model = assemble_frequency_model(reduce_case(case), case.devices(), None, case.base_mva)
    assert not model.u.any()
