"""Calibration of the SG frequency and voltage models from step responses.

Fitting works in response space: a bounded Nelder-Mead simplex minimizes the
RMS error between the simulated and measured step response. The simplex is
restarted from its best vertex until it stops improving, which makes the
result deterministic for identical inputs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.optimize import minimize

from .devices import SgFreqParams, SgVoltParams
from .lti import LtiModel, response_at

logger = logging.getLogger(__name__)

SG_FREQ = "sg_freq"
SG_VOLT = "sg_volt"
FAMILIES = {SG_FREQ: SgFreqParams, SG_VOLT: SgVoltParams}

# parameters adjusted by the fit; the rest are held at the guess
FREE = {SG_FREQ: ("M", "D", "R_SG", "T_SG"), SG_VOLT: ("G", "T_G", "K_P", "K_I")}


@dataclass(frozen=True)
class StepResponseData:
    times: np.ndarray
    values: np.ndarray
    input_magnitude: float
    family: str
    alpha: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.times, float)
        v = np.asarray(self.values, float)
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}; expected one of {sorted(FAMILIES)}")
        if t.ndim != 1 or t.shape != v.shape:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if t.size < 20:
            raise ValueError(f"need at least 20 samples, got {t.size}")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("non-finite samples")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class FitResult:
    params: SgFreqParams | SgVoltParams
    rms: float
    initial_rms: float
    warnings: tuple[str, ...] = field(default=())
    at_bounds: tuple[str, ...] = field(default=())


def step_model(family: str, params, alpha: float, input_magnitude: float) -> LtiModel:
    """Two-state realization whose first state is the model output."""
    if family == SG_FREQ:
        p = params
        A = np.array([[-p.D / p.M, -1.0 / p.M], [p.K / (p.T_SG * p.R_SG), -1.0 / p.T_SG]])
        B = np.array([[alpha / p.M], [0.0]])
        labels = (("omega", 0), ("P_M", 0))
    elif family == SG_VOLT:
        p = params
        A = np.array([[-(p.G * p.K_P + 1.0) / p.T_G, -p.G * p.K_I / p.T_G], [1.0 / p.T_I, 0.0]])
        B = np.array([[alpha * p.G / p.T_G], [0.0]])
        labels = (("dV", 0), ("x_PI", 0))
    else:
        raise ValueError(f"unknown model family {family!r}")
    return LtiModel(A, B, np.array([float(input_magnitude)]), labels)


def simulate_step(family: str, params, input_magnitude: float, times, alpha: float = 1.0) -> np.ndarray:
    """Exact step response of the SG transfer function at the requested times."""
    if not isinstance(params, FAMILIES.get(family, ())):
        raise ValueError(f"{family} needs {FAMILIES[family].__name__} parameters" if family in FAMILIES
                         else f"unknown model family {family!r}")
    times = np.asarray(times, float)
    if input_magnitude == 0:
        return np.zeros_like(times)
    return response_at(step_model(family, params, alpha, input_magnitude), times)[0]


def _rms(a, b) -> float:
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _default_bounds(family: str, guess) -> dict[str, tuple[float, float]]:
    out = {}
    for name in FREE[family]:
        g = getattr(guess, name)
        out[name] = (0.0, 10.0 * g + 1.0) if name in ("D", "K_P") else (g / 10.0, g * 10.0)
    return out


def _dominant_time_constant(family, params, alpha) -> float:
    lam = np.linalg.eigvals(step_model(family, params, alpha, 1.0).A)
    slow = np.abs(lam.real).min()
    return math.inf if slow == 0 else 1.0 / slow


def fit_transfer_function(data: StepResponseData, guess, bounds: dict | None = None, *,
                          max_restarts: int = 30, warn_rms: float = 1e-3) -> FitResult:
    """Fit the free parameters of ``data.family`` to the step response.

    For the frequency family only K/R_SG is identifiable, so K is fixed at 1 and
    the guess's R_SG rescaled accordingly. For the voltage family T_I is held at
    the guess (only K_I/T_I enters the response). ``warn_rms`` is relative to
    the peak of the data.
    """
    family = data.family
    if not isinstance(guess, FAMILIES[family]):
        raise ValueError(f"guess must be {FAMILIES[family].__name__}")
    if family == SG_FREQ and guess.K != 1.0:
        guess = replace(guess, K=1.0, R_SG=guess.R_SG / guess.K) if guess.K > 0 else replace(guess, K=1.0)
    names = FREE[family]
    bnds = _default_bounds(family, guess) | dict(bounds or {})
    x0 = np.array([getattr(guess, n) for n in names], float)
    lo = np.array([bnds[n][0] for n in names], float)
    hi = np.array([bnds[n][1] for n in names], float)
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError("initial guess lies outside the bounds")

    # optimize on parameters scaled by the guess (zeros kept unscaled)
    scale = np.where(x0 != 0, np.abs(x0), 1.0)
    y = data.values
    peak = float(np.abs(y).max())
    warnings: list[str] = []

    horizon = data.times[-1] - data.times[0]
    tau = _dominant_time_constant(family, guess, data.alpha)
    if horizon < 3 * tau:
        warnings.append(f"data spans {horizon:.3g} s, less than 3 dominant time constants ({tau:.3g} s) of the guess")

    def build(z):
        return replace(guess, **{n: float(v) for n, v in zip(names, z * scale)})

    def objective(z):
        try:
            p = build(z)
        except ValueError:
            return math.inf
        sim = simulate_step(family, p, data.input_magnitude, data.times, data.alpha)
        r = _rms(sim, y)
        return r if math.isfinite(r) else math.inf

    z_best = x0 / scale
    f_best = f0 = objective(z_best)
    if peak == 0:
        warnings.append("data is identically zero; the fit is degenerate")
        return FitResult(guess, f0, f0, tuple(warnings))

    zb = list(zip(lo / scale, hi / scale))
    for _ in range(max_restarts):
        res = minimize(objective, z_best, method="Nelder-Mead", bounds=zb,
                       options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 4000 * len(names),
                                "maxfev": 8000 * len(names)})
        if res.fun < f_best:
            improvement = f_best - res.fun
            z_best, f_best = np.asarray(res.x, float), float(res.fun)
            if improvement <= 1e-3 * f_best or f_best <= 1e-14 * peak:
                break
        else:
            break

    params = build(z_best)
    stuck = tuple(n for n, v, a, b in zip(names, z_best * scale, lo, hi)
                  if min(abs(v - a), abs(v - b)) <= 1e-6 * max(abs(v), 1.0))
    if stuck:
        warnings.append(f"parameters at their bounds: {', '.join(stuck)}")
    if f_best > warn_rms * peak:
        warnings.append(f"poor fit: RMS {f_best:.3e} exceeds {warn_rms:g} of the peak response")
    for w in warnings:
        logger.warning(w)
    return FitResult(params, f_best, f0, tuple(warnings), stuck)


def params_to_record(family: str, params) -> dict:
    return {family: {f.name: float(getattr(params, f.name)) for f in fields(params)}}
