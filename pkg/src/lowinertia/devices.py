"""Device parameter records and the scalar transfer functions of the SG models.

Two device kinds are modelled: synchronous generators (``"sg"``) and droop
grid-forming inverters (``"gfm"``). Each device carries a frequency-model and a
voltage-model parameter record plus its rated capacity ``rating_mva``; the
per-device scaling ``alpha = S_B / S_i`` is derived from the latter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Mapping, Union

from .errors import CaseValidationError

SG = "sg"
GFM = "gfm"
DEVICE_KINDS = (SG, GFM)

#: System-wide transient synchronizing coefficient D' (1/s).
DEFAULT_D_PRIME = 0.05


@dataclass(frozen=True)
class Constants:
    f0: float = 60.0
    d_prime: float = DEFAULT_D_PRIME

    @property
    def omega0(self) -> float:
        return 2.0 * math.pi * self.f0


def _check_positive(obj, names):
    for name in names:
        value = getattr(obj, name)
        if not (math.isfinite(value) and value > 0):
            raise CaseValidationError(f"{type(obj).__name__}.{name} must be > 0, got {value!r}")


def _check_nonnegative(obj, names):
    for name in names:
        value = getattr(obj, name)
        if not (math.isfinite(value) and value >= 0):
            raise CaseValidationError(f"{type(obj).__name__}.{name} must be >= 0, got {value!r}")


@dataclass(frozen=True)
class SgFreqParams:
    """Shaft + governor/turbine model of an SG.

    ``M`` momentum (pu*s), ``D`` damping (pu), ``K`` governor/turbine gain,
    ``R_SG`` droop (pu), ``T_SG`` governor/turbine time constant (s).
    """

    M: float = 7.0
    D: float = 1.0
    K: float = 1.0
    R_SG: float = 0.05
    T_SG: float = 7.0

    def __post_init__(self):
        _check_positive(self, ("M", "R_SG", "T_SG"))
        _check_nonnegative(self, ("D", "K"))


@dataclass(frozen=True)
class GfmFreqParams:
    """P-f droop ``R`` (pu) and power-measurement filter ``T_c`` (s)."""

    R: float = 0.05
    T_c: float = 0.01

    def __post_init__(self):
        _check_positive(self, ("R", "T_c"))


@dataclass(frozen=True)
class SgVoltParams:
    """AVR/excitation loop of an SG: gain ``G``, lag ``T_G``, PI block ``K_P``, ``K_I``, ``T_I``."""

    G: float = 2.0
    T_G: float = 0.5
    T_I: float = 1.0
    K_P: float = 1.0
    K_I: float = 5.0

    def __post_init__(self):
        _check_positive(self, ("G", "T_G", "T_I", "K_I"))
        _check_nonnegative(self, ("K_P",))


@dataclass(frozen=True)
class GfmVoltParams:
    """Q-V droop ``R_q`` (pu) and voltage response time constant ``T_q`` (s)."""

    R_q: float = 0.05
    T_q: float = 0.05

    def __post_init__(self):
        _check_positive(self, ("R_q", "T_q"))


PARAM_TYPES = {
    "sg_freq": SgFreqParams,
    "gfm_freq": GfmFreqParams,
    "sg_volt": SgVoltParams,
    "gfm_volt": GfmVoltParams,
}


@dataclass(frozen=True)
class ParamSet:
    """Parameter records for one generator, for either device kind.

    Keeping both kinds lets a scenario switch a bus between SG and GFM without
    re-reading parameter files. Missing records fall back to the generic
    placeholder defaults above.
    """

    sg_freq: SgFreqParams = field(default_factory=SgFreqParams)
    gfm_freq: GfmFreqParams = field(default_factory=GfmFreqParams)
    sg_volt: SgVoltParams = field(default_factory=SgVoltParams)
    gfm_volt: GfmVoltParams = field(default_factory=GfmVoltParams)

    def merged(self, overrides: Mapping[str, Any] | None) -> "ParamSet":
        """Return a copy with records (or individual fields) replaced from a mapping."""
        if not overrides:
            return self
        changes = {}
        for key, value in overrides.items():
            if key not in PARAM_TYPES:
                raise CaseValidationError(
                    f"unknown parameter record '{key}' (expected one of {sorted(PARAM_TYPES)})"
                )
            if isinstance(value, (SgFreqParams, GfmFreqParams, SgVoltParams, GfmVoltParams)):
                changes[key] = value
                continue
            allowed = {f.name for f in fields(PARAM_TYPES[key])}
            unknown = set(value) - allowed
            if unknown:
                raise CaseValidationError(f"unknown fields {sorted(unknown)} in '{key}' record")
            changes[key] = replace(getattr(self, key), **{k: float(v) for k, v in value.items()})
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {key: {f.name: getattr(getattr(self, key), f.name) for f in fields(typ)} for key, typ in PARAM_TYPES.items()}


@dataclass(frozen=True)
class SgDevice:
    bus: int
    rating_mva: float
    freq: SgFreqParams
    volt: SgVoltParams
    kind = SG

    def __post_init__(self):
        _check_positive(self, ("rating_mva",))


@dataclass(frozen=True)
class GfmDevice:
    bus: int
    rating_mva: float
    freq: GfmFreqParams
    volt: GfmVoltParams
    kind = GFM

    def __post_init__(self):
        _check_positive(self, ("rating_mva",))


Device = Union[SgDevice, GfmDevice]


def make_device(kind: str, bus: int, rating_mva: float, params: ParamSet | None = None) -> Device:
    params = params or ParamSet()
    if kind == SG:
        return SgDevice(bus, rating_mva, params.sg_freq, params.sg_volt)
    if kind == GFM:
        return GfmDevice(bus, rating_mva, params.gfm_freq, params.gfm_volt)
    raise CaseValidationError(f"unknown device kind {kind!r} at bus {bus}")


def alpha(s_base: float, s_rated: float) -> float:
    """Per-device scaling: system base divided by the device rating."""
    if not (s_base > 0 and s_rated > 0):
        raise ValueError(f"bases must be positive, got S_B={s_base}, S_i={s_rated}")
    return s_base / s_rated


def sg_freq_tf(params: SgFreqParams, alpha: float, s: complex) -> complex:
    """Frequency response Δω(s)/ΔP_G(s) of the SG shaft + governor loop.

    The D' synchronizing term is not part of this loop. With ``M = 1`` this is
    ``alpha (s T + 1) / (s^2 T + s (D T + 1) + D + K/R)``.
    """
    p = params
    num = alpha * (s * p.T_SG + 1.0)
    den = p.M * p.T_SG * s * s + s * (p.D * p.T_SG + p.M) + (p.D + p.K / p.R_SG)
    return num / den


def sg_volt_tf(params: SgVoltParams, alpha: float, s: complex) -> complex:
    """Voltage response Δ|V|(s)/ΔQ_G(s) of the SG excitation loop (zero at the origin)."""
    p = params
    return alpha * p.G * s / (s * s * p.T_G + s * (p.G * p.K_P + 1.0) + p.G * p.K_I / p.T_I)


def droop_stiffness(device: Device, s_base: float) -> float:
    """Steady-state MW-per-frequency stiffness c_i used for the droop law and slack sharing.

    SG: (D + K/R_SG)/alpha; GFM: 1/(alpha R).
    """
    a = alpha(s_base, device.rating_mva)
    if isinstance(device, SgDevice):
        f = device.freq
        return (f.D + f.K / f.R_SG) / a
    return 1.0 / (a * device.freq.R)
