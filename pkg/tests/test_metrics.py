import math

import numpy as np
import pytest

from lowinertia.frequency import DisturbanceSpec
from lowinertia.lti import solve_analytic, solve_numeric_oracle
from lowinertia.metrics import (frequency_metrics, hertz_sec, max_voltage_deviation, nadir, rocof, settling_time,
                                voltage_metrics)

from support import builtin, frequency_model


def exp_trace(dt=0.01, t_end=20.0):
    t = np.linspace(0, t_end, int(round(t_end / dt)) + 1)
    return t, 60 - 0.3 * (1 - np.exp(-t))


def test_nadir_monotone():
    t, f = exp_trace()
    value, when = nadir(t, f)
    assert value == pytest.approx(59.7, abs=1e-8)
    assert when == 20.0


def test_nadir_constant_and_sine():
    t = np.linspace(0, 5, 51)
    assert nadir(t, np.full_like(t, 60.0)) == (60.0, 0.0)
    t = np.linspace(0, np.pi, 1001)
    value, when = nadir(t, 60 - 0.2 * np.sin(t))
    assert value == pytest.approx(59.8, abs=1e-12)
    assert when == pytest.approx(np.pi / 2, abs=2e-3)


def test_rocof_first_interval():
    t, f = exp_trace(dt=0.001)
    expected = -0.3 * (1 - math.exp(-1 / 60)) * 60
    assert rocof(t, f) == pytest.approx(expected, abs=1e-5)
    assert expected == pytest.approx(-0.2975, abs=1e-4)


def test_rocof_affine_and_constant():
    t = np.linspace(0, 10, 101)
    assert rocof(t, np.full_like(t, 60.0)) == 0.0
    assert rocof(t, 60 - 0.5 * t) == pytest.approx(-0.5, abs=1e-12)
    f = 60 - 0.3 * (1 - np.exp(-t))
    assert rocof(t, f + 1.5) == pytest.approx(rocof(t, f), abs=1e-12)


def test_hertz_sec_closed_form():
    t, f = exp_trace(dt=0.001)
    assert hertz_sec(t, f) == pytest.approx(0.3 * (20 - 1 + math.exp(-20)), abs=1e-6)
    t2, f2 = exp_trace(dt=0.0005)
    assert abs(hertz_sec(t, f) - hertz_sec(t2, f2)) < 1e-6
    assert hertz_sec(t, np.full_like(t, 60.0)) == 0.0


def test_hertz_sec_additive_and_nonnegative():
    t = np.linspace(0, 10, 1001)
    f = 60 + 0.2 * np.sin(3 * t) * np.exp(-0.2 * t)
    whole = hertz_sec(t, f, t0=0, ts=10)
    parts = hertz_sec(t, f, t0=0, ts=3.333) + hertz_sec(t, f, t0=3.333, ts=10)
    assert whole >= 0
    assert whole == pytest.approx(parts, abs=1e-12)


def test_settling_time():
    t = np.linspace(0, 20, 200001)
    assert settling_time(t, 1 - np.exp(-t)) == pytest.approx(-math.log(0.02), abs=1e-6)
    assert settling_time(t, np.full_like(t, 3.0)) == 0.0
    assert settling_time(t, np.sin(2 * t)) is None


def test_voltage_metrics():
    t = np.linspace(0, 1, 101)
    dv = 0.05 * 0.3 * (1 - np.exp(-t / 0.05))
    m = voltage_metrics(t, dv)
    assert m.max_dev_pu == pytest.approx(0.015 * (1 - math.exp(-20)), abs=1e-15)
    assert m.max_dev_time_s == 1.0
    assert max_voltage_deviation(t, np.zeros_like(t)) == (0.0, 0.0)


def test_metrics_on_oracle_trajectories_agree():
    model, _ = frequency_model(builtin("case9"), {3: "gfm"}, DisturbanceSpec.load_step(5, 100))
    a = solve_analytic(model, 20, 0.1)
    b = solve_numeric_oracle(model, 20, 1e-5, 0.1)
    for row in model.rows("omega"):
        ma = frequency_metrics(a.times, 60 * (1 + a.values[row]))
        mb = frequency_metrics(b.times, 60 * (1 + b.values[row]))
        for key in ("nadir_hz", "rocof_hz_per_s", "hertz_sec"):
            assert abs(getattr(ma, key) - getattr(mb, key)) < 1e-6


def test_shape_errors():
    with pytest.raises(ValueError):
        nadir([0, 1], [60.0])
    with pytest.raises(ValueError):
        hertz_sec([0, 1, 2], [60, 60, 60], t0=1.5, ts=1.0)
