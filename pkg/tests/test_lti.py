import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from lowinertia.frequency import DisturbanceSpec
from lowinertia.lti import (LtiModel, eigen_diagnostics, factorize, phi1, response_at, solve_analytic,
                            solve_numeric_oracle, time_grid)

from support import builtin, frequency_model


def scalar(a, b=1.0, u=1.0):
    return LtiModel(np.array([[a]]), np.array([[b]]), np.array([u]), (("dV", 1),))


def test_scalar_decay():
    traj = solve_analytic(scalar(-1.0), 1.0, 0.5)
    assert traj.values[0, -1] == pytest.approx(1 - math.exp(-1), abs=1e-15)


def test_integrator():
    traj = solve_analytic(scalar(0.0), 2.0, 0.1)
    assert traj.values[0, -1] == pytest.approx(2.0, abs=1e-14)


def test_zero_input():
    case = builtin("case9")
    model, _ = frequency_model(case, {}, DisturbanceSpec.load_step(5, 100))
    traj = solve_analytic(model.with_input(np.zeros_like(model.u)), 20, 0.1)
    assert not traj.values.any()


def test_phi1_series_and_direct_agree():
    z = np.array([0.0, 1e-5, -9e-5, 1e-4 + 1e-12, 0.5, -3.0 + 2.0j])
    ref = np.array([1.0] + [(np.expm1(v) / v) for v in z[1:]])
    np.testing.assert_allclose(phi1(z), ref, rtol=1e-13)


def test_time_grid_includes_end():
    t = time_grid(20, 0.1)
    assert len(t) == 201 and t[0] == 0 and t[-1] == pytest.approx(20)


def test_rk4_oracle_scalar():
    ref = solve_numeric_oracle(scalar(-1.0), 1.0, 1e-4, 0.1)
    exact = 1 - np.exp(-ref.times)
    assert np.abs(ref.values[0] - exact).max() < 1e-10


def test_oracle_nine_bus_all_sg():
    model, _ = frequency_model(builtin("case9"), {}, DisturbanceSpec.load_step(5, 100))
    a = solve_analytic(model, 20, 0.1)
    b = solve_numeric_oracle(model, 20, 1e-5, 0.1)
    assert np.abs(a.values - b.values).max() < 1e-8


def test_oracle_stiff_mix():
    # T_c = 0.01 s GFMs next to a T_SG = 7 s governor
    model, _ = frequency_model(builtin("case9"), {2: "gfm", 3: "gfm"}, DisturbanceSpec.load_step(5, 100))
    a = solve_analytic(model, 20, 0.1)
    b = solve_numeric_oracle(model, 20, 1e-5, 0.1)
    assert np.abs(a.values - b.values).max() < 1e-8


def test_sampling_invariance():
    model, _ = frequency_model(builtin("case9"), {3: "gfm"}, DisturbanceSpec.load_step(5, 100))
    coarse = solve_analytic(model, 20, 0.1)
    fine = solve_analytic(model, 20, 0.05)
    np.testing.assert_allclose(fine.values[:, ::2], coarse.values, rtol=0, atol=1e-13)


def test_linearity():
    model, _ = frequency_model(builtin("case9"), {3: "gfm"}, DisturbanceSpec.load_step(5, 100))
    one = solve_analytic(model, 20, 0.1).values
    two = solve_analytic(model.with_input(2 * model.u), 20, 0.1).values
    np.testing.assert_allclose(two, 2 * one, rtol=1e-12, atol=1e-300)


def _random_stable(rng, n=8):
    M = rng.normal(size=(n, n))
    shift = np.linalg.eigvals(M).real.max() + rng.uniform(0.1, 1.0)
    return M - shift * np.eye(n)


@pytest.mark.parametrize("seed", range(10))
def test_semigroup(seed):
    rng = np.random.default_rng(seed)
    A = _random_stable(rng)
    t1, t2 = rng.uniform(0.1, 2.0, size=2)
    fact = factorize(A)
    def expm_spectral(t):
        return ((fact.vectors * np.exp(fact.eigenvalues * t)) @ fact.inverse).real
    np.testing.assert_allclose(expm_spectral(t1 + t2), expm_spectral(t1) @ expm_spectral(t2), atol=1e-9)
    np.testing.assert_allclose(expm_spectral(t1 + t2), sla.expm(A * (t1 + t2)), atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_random_systems_match_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    A = _random_stable(rng, n)
    model = LtiModel(A, rng.normal(size=(n, 2)), rng.normal(size=2), tuple(("dV", i) for i in range(n)))
    a = solve_analytic(model, 2.0, 0.1)
    b = solve_numeric_oracle(model, 2.0, 1e-3, 0.1)
    scale = max(1.0, np.abs(a.values).max())
    assert np.abs(a.values - b.values).max() < 1e-8 * scale


def test_defective_matrix_falls_back_to_expm():
    # Jordan block: eigenvectors are parallel
    A = np.array([[-1.0, 1.0], [0.0, -1.0]])
    model = LtiModel(A, np.eye(2), np.array([0.0, 1.0]), (("dV", 1), ("dV", 2)))
    traj = solve_analytic(model, 3.0, 0.1)
    t = traj.times
    np.testing.assert_allclose(traj.values[1], 1 - np.exp(-t), atol=1e-12)
    np.testing.assert_allclose(traj.values[0], 1 - np.exp(-t) - t * np.exp(-t), atol=1e-12)
    if traj.method == "expm":
        assert traj.warnings
    np.testing.assert_allclose(response_at(model, t), traj.values, atol=1e-12)


def test_eigen_diagnostics():
    assert eigen_diagnostics(np.array([[-1.0]])).status == "stable"
    rep = eigen_diagnostics(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    assert rep.status == "marginal"
    np.testing.assert_allclose(sorted(rep.eigenvalues.imag), [-1, 1])
    assert eigen_diagnostics(np.array([[0.5]])).status == "unstable"
    model, _ = frequency_model(builtin("case9"), {3: "gfm"}, DisturbanceSpec.load_step(5, 100))
    rep = eigen_diagnostics(model)
    assert rep.stable and np.all(rep.eigenvalues.real < 0)


def test_model_validation():
    with pytest.raises(ValueError):
        LtiModel(np.zeros((2, 3)), np.zeros((2, 1)), np.zeros(1), (("dV", 1), ("dV", 2)))
    with pytest.raises(ValueError):
        LtiModel(np.zeros((2, 2)), np.zeros((2, 1)), np.zeros(2), (("dV", 1), ("dV", 2)))
