"""Scalar performance metrics of frequency and voltage traces."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import trapezoid

PMU_RATE = 60.0
SETTLING_BAND = 0.02
# a trace must spend at least this fraction of the horizon inside the band
MIN_DWELL_FRACTION = 0.05


def _trace(times, values):
    t = np.asarray(times, float)
    f = np.asarray(values, float)
    if f.size == 0:
        raise ValueError("empty trace")
    if t.shape != f.shape:
        raise ValueError(f"times {t.shape} and values {f.shape} differ in shape")
    return t, f


def nadir(times, freq, f0: float = 60.0) -> tuple[float, float]:
    """Extremum of the trace farthest from ``f0`` and its time (first occurrence)."""
    t, f = _trace(times, freq)
    k = int(np.argmax(np.abs(f - f0)))
    return float(f[k]), float(t[k])


def rocof(times, freq, sample_rate: float = PMU_RATE) -> float:
    """Largest-magnitude slope between consecutive PMU samples (signed, Hz/s).

    The trace is linearly resampled at ``sample_rate`` starting at its first time.
    """
    t, f = _trace(times, freq)
    if f.size < 2:
        raise ValueError("RoCoF needs at least two samples")
    n = int(math.floor((t[-1] - t[0]) * sample_rate + 1e-9))
    if n < 1:
        raise ValueError("trace shorter than one PMU interval")
    grid = t[0] + np.arange(n + 1) / sample_rate
    pmu = np.interp(grid, t, f)
    slopes = np.diff(pmu) * sample_rate
    return float(slopes[int(np.argmax(np.abs(slopes)))])


def hertz_sec(times, freq, f0: float = 60.0, t0: float | None = None, ts: float | None = None) -> float:
    """Trapezoidal integral of |f0 - f(t)| over [t0, ts] (Hz*s)."""
    t, f = _trace(times, freq)
    t0 = float(t[0]) if t0 is None else float(t0)
    ts = float(t[-1]) if ts is None else float(ts)
    if not (t[0] - 1e-12 <= t0 < ts <= t[-1] + 1e-12):
        raise ValueError(f"bad integration interval [{t0}, {ts}] for horizon [{t[0]}, {t[-1]}]")
    inside = (t > t0) & (t < ts)
    tt = np.concatenate([[t0], t[inside], [ts]])
    dev = np.abs(f0 - np.interp(tt, t, f))
    return float(trapezoid(dev, tt))


def settling_time(times, values, band_fraction: float = SETTLING_BAND,
                  min_dwell_fraction: float = MIN_DWELL_FRACTION) -> float | None:
    """Time after which the trace stays within ``band_fraction`` of its peak excursion
    around the final value.

    The crossing is located by linear interpolation between samples. Returns
    ``None`` when the trace has not settled: the in-band tail would be shorter
    than ``min_dwell_fraction`` of the horizon.
    """
    t, x = _trace(times, values)
    final = x[-1]
    excursion = np.abs(x - x[0]).max()
    if excursion == 0:
        return float(t[0])
    band = band_fraction * excursion
    err = np.abs(x - final)
    outside = np.flatnonzero(err > band)
    if outside.size == 0:
        return float(t[0])
    k = int(outside[-1])
    # err[k] > band >= err[k+1]
    frac = (err[k] - band) / (err[k] - err[k + 1])
    ts = float(t[k] + frac * (t[k + 1] - t[k]))
    if t[-1] - ts < min_dwell_fraction * (t[-1] - t[0]):
        return None
    return ts


def max_voltage_deviation(times, dv) -> tuple[float, float]:
    t, v = _trace(times, dv)
    k = int(np.argmax(np.abs(v)))
    return float(abs(v[k])), float(t[k])


@dataclass(frozen=True)
class FrequencyMetrics:
    nadir_hz: float
    nadir_time_s: float
    rocof_hz_per_s: float
    hertz_sec: float
    settling_time_s: float | None
    steady_state_dev_hz: float

    @property
    def settled(self) -> bool:
        return self.settling_time_s is not None

    def to_dict(self) -> dict:
        return asdict(self) | {"settled": self.settled}


@dataclass(frozen=True)
class VoltageMetrics:
    max_dev_pu: float
    max_dev_time_s: float
    final_dev_pu: float

    def to_dict(self) -> dict:
        return asdict(self)


def frequency_metrics(times, freq_hz, f0: float = 60.0, t0: float = 0.0,
                      band_fraction: float = SETTLING_BAND, sample_rate: float = PMU_RATE) -> FrequencyMetrics:
    """All frequency metrics of one bus; HS integrates up to the settling time
    (or the horizon if unsettled)."""
    t, f = _trace(times, freq_hz)
    nd, nd_t = nadir(t, f, f0)
    ts = settling_time(t, f, band_fraction)
    end = ts if ts is not None and ts > t0 else float(t[-1])
    return FrequencyMetrics(
        nadir_hz=nd,
        nadir_time_s=nd_t,
        rocof_hz_per_s=rocof(t, f, sample_rate),
        hertz_sec=hertz_sec(t, f, f0, t0, end),
        settling_time_s=ts,
        steady_state_dev_hz=float(f[-1] - f0),
    )


def voltage_metrics(times, dv) -> VoltageMetrics:
    t, v = _trace(times, dv)
    peak, peak_t = max_voltage_deviation(t, v)
    return VoltageMetrics(peak, peak_t, float(v[-1]))
