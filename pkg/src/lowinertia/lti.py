"""Closed-form solution of x' = A x + B u with x(0) = 0 and constant u.

The production path diagonalizes A once and evaluates

    x(t) = V diag(t * phi1(lambda_i t)) V^-1 B u,   phi1(z) = (e^z - 1)/z

on the output grid. Near-defective eigenbases fall back to the matrix
exponential of the augmented matrix [[A, B u], [0, 0]]. A fixed-step RK4
integrator is provided as an independent oracle for tests and the CLI's
``--run-oracle`` report.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.linalg as sla

from .errors import NumericalError

logger = logging.getLogger(__name__)

#: ||V||_1 ||V^-1||_1 above which the eigenbasis is not trusted
CONDITION_LIMIT = 1e8
#: imaginary residue tolerance, relative to max(1, max |x|)
IMAG_TOL = 1e-9
_SERIES_RADIUS = 1e-4

STATE_UNITS = {
    "delta_rel": "rad",
    "omega": "pu",
    "P_M": "pu",
    "dV": "pu",
    "x_PI": "pu",
}


@dataclass(frozen=True)
class LtiModel:
    """Constant-coefficient system x' = A x + B u with labelled states."""

    A: np.ndarray
    B: np.ndarray
    u: np.ndarray
    state_labels: tuple[tuple[str, int], ...]
    input_labels: tuple[int, ...] = ()

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise ValueError(f"B has {self.B.shape[0]} rows, A has {n}")
        if self.u.shape != (self.B.shape[1],):
            raise ValueError(f"u has length {self.u.shape}, B has {self.B.shape[1]} columns")
        if len(self.state_labels) != n:
            raise ValueError("one label per state required")

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def units(self) -> tuple[str, ...]:
        return tuple(STATE_UNITS.get(kind, "") for kind, _ in self.state_labels)

    def forcing(self) -> np.ndarray:
        return self.B @ self.u

    def with_input(self, u) -> "LtiModel":
        return LtiModel(self.A, self.B, np.asarray(u, float), self.state_labels, self.input_labels)

    def rows(self, kind: str) -> np.ndarray:
        return np.array([i for i, (k, _) in enumerate(self.state_labels) if k == kind], dtype=int)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    values: np.ndarray  # n_states x n_times
    state_labels: tuple[tuple[str, int], ...]
    units: tuple[str, ...]
    method: str = "spectral"
    warnings: tuple[str, ...] = field(default=())

    def select(self, kind: str) -> tuple[list[int], np.ndarray]:
        """Bus ids and rows (n_bus x n_times) of every state of one kind."""
        idx = [i for i, (k, _) in enumerate(self.state_labels) if k == kind]
        return [self.state_labels[i][1] for i in idx], self.values[idx]

    def series(self, kind: str, bus: int) -> np.ndarray:
        return self.values[self.state_labels.index((kind, bus))]


@dataclass(frozen=True)
class SpectralFactorization:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    inverse: np.ndarray
    condition: float

    @property
    def trusted(self) -> bool:
        return bool(np.isfinite(self.condition) and self.condition <= CONDITION_LIMIT)

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.eigenvalues) @ self.inverse


def factorize(A: np.ndarray) -> SpectralFactorization:
    """Eigendecomposition with eigenvalues sorted by (real, imag) part."""
    lam, V = np.linalg.eig(np.asarray(A, float))
    order = np.lexsort((lam.imag, lam.real))
    lam, V = lam[order], V[:, order]
    try:
        Vinv = np.linalg.inv(V)
    except np.linalg.LinAlgError:
        n = V.shape[0]
        return SpectralFactorization(lam, V, np.full((n, n), np.nan + 0j), math.inf)
    cond = float(np.linalg.norm(V, 1) * np.linalg.norm(Vinv, 1))
    return SpectralFactorization(lam, V, Vinv, cond)


def phi1(z) -> np.ndarray:
    """(e^z - 1)/z, evaluated by its Taylor series near the removable singularity."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < _SERIES_RADIUS
    zs = z[small]
    # 1 + z/2 + z^2/6 + z^3/24 + z^4/120; truncation error ~ |z|^5/720
    out[small] = 1 + zs * (1 / 2 + zs * (1 / 6 + zs * (1 / 24 + zs / 120)))
    zb = z[~small]
    out[~small] = np.expm1(zb) / zb
    return out


def time_grid(t_end: float, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not t_end >= dt:
        raise ValueError(f"t_end ({t_end}) must be at least dt ({dt})")
    n = int(math.floor(t_end / dt + 1e-9))
    return np.arange(n + 1) * dt


def evaluate(fact: SpectralFactorization, forcing: np.ndarray, times: np.ndarray) -> tuple[np.ndarray, float]:
    """Zero-state response to constant forcing ``B u``; returns (values, max imaginary residue)."""
    w = fact.inverse @ np.asarray(forcing, dtype=complex)
    t = np.asarray(times, float)
    kernel = t[None, :] * phi1(fact.eigenvalues[:, None] * t[None, :])
    X = fact.vectors @ (kernel * w[:, None])
    return X.real, float(np.abs(X.imag).max(initial=0.0))


def _solve_expm(A: np.ndarray, forcing: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Augmented-matrix exponential stepping on a uniform grid."""
    n = A.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = A
    aug[:n, n] = forcing
    z = np.zeros(n + 1)
    z[n] = 1.0
    out = np.zeros((n, len(times)))
    if len(times) < 2:
        return out
    E = sla.expm(aug * (times[1] - times[0]))
    for k in range(1, len(times)):
        z = E @ z
        out[:, k] = z[:n]
    return out


def response_at(model: LtiModel, times) -> np.ndarray:
    """Zero-state response at arbitrary (nonnegative) times."""
    times = np.asarray(times, float)
    forcing = model.forcing()
    fact = factorize(model.A)
    if fact.trusted:
        values, residue = evaluate(fact, forcing, times)
        if residue <= IMAG_TOL * max(1.0, float(np.abs(values).max(initial=0.0))):
            return values
    n = model.n_states
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = model.A
    aug[:n, n] = forcing
    return np.column_stack([sla.expm(aug * t)[:n, n] for t in times]) if len(times) else np.zeros((n, 0))


def solve_analytic(model: LtiModel, t_end: float, dt: float,
                   factorization: SpectralFactorization | None = None) -> Trajectory:
    times = time_grid(t_end, dt)
    forcing = model.forcing()
    warnings = []
    fact = factorization if factorization is not None else factorize(model.A)
    values = None
    if fact.trusted:
        values, residue = evaluate(fact, forcing, times)
        scale = max(1.0, float(np.abs(values).max(initial=0.0)))
        if residue > IMAG_TOL * scale or not np.all(np.isfinite(values)):
            warnings.append(f"imaginary residue {residue:.3e} exceeds tolerance; used matrix exponential")
            values = None
    else:
        warnings.append(f"eigenbasis condition {fact.condition:.3e} > {CONDITION_LIMIT:.0e}; used matrix exponential")
    method = "spectral"
    if values is None:
        for w in warnings:
            logger.warning(w)
        values = _solve_expm(model.A, forcing, times)
        method = "expm"
    if not np.all(np.isfinite(values)):
        raise NumericalError("non-finite values in analytic trajectory")
    return Trajectory(times, values, model.state_labels, model.units, method, tuple(warnings))


@numba.njit(cache=True)
def _rk4(A, b, h, steps_per_out, n_out):
    n = A.shape[0]
    out = np.zeros((n, n_out))
    x = np.zeros(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    bad = -1
    for j in range(1, n_out):
        for _ in range(steps_per_out):
            for i in range(n):
                s = b[i]
                for c in range(n):
                    s += A[i, c] * x[c]
                k1[i] = s
            for i in range(n):
                tmp[i] = x[i] + 0.5 * h * k1[i]
            for i in range(n):
                s = b[i]
                for c in range(n):
                    s += A[i, c] * tmp[c]
                k2[i] = s
            for i in range(n):
                tmp[i] = x[i] + 0.5 * h * k2[i]
            for i in range(n):
                s = b[i]
                for c in range(n):
                    s += A[i, c] * tmp[c]
                k3[i] = s
            for i in range(n):
                tmp[i] = x[i] + h * k3[i]
            for i in range(n):
                s = b[i]
                for c in range(n):
                    s += A[i, c] * tmp[c]
                k4[i] = s
            for i in range(n):
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(n):
            if not np.isfinite(x[i]):
                bad = j
        out[:, j] = x
        if bad >= 0:
            break
    return out, bad


def solve_numeric_oracle(model: LtiModel, t_end: float, dt_internal: float, dt_out: float) -> Trajectory:
    """Classical fixed-step RK4 from the zero state, sampled every ``dt_out``."""
    if not dt_internal <= dt_out * (1 + 1e-12):
        raise ValueError("dt_internal must not exceed dt_out")
    ratio = dt_out / dt_internal
    steps = int(round(ratio))
    if abs(ratio - steps) > 1e-6 * ratio:
        raise ValueError("dt_out must be an integer multiple of dt_internal")
    times = time_grid(t_end, dt_out)
    h = dt_out / steps
    A = np.ascontiguousarray(model.A, dtype=float)
    b = np.ascontiguousarray(model.forcing(), dtype=float)
    values, bad = _rk4(A, b, h, steps, len(times))
    if bad >= 0:
        raise NumericalError(f"RK4 state became non-finite by t = {times[bad]:.6g} s")
    return Trajectory(times, values, model.state_labels, model.units, "rk4")


@dataclass(frozen=True)
class EigenReport:
    eigenvalues: np.ndarray
    damping: np.ndarray
    status: str  # stable | marginal | unstable

    @property
    def stable(self) -> bool:
        return self.status == "stable"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "max_real_part": float(self.eigenvalues.real.max(initial=-math.inf)),
            "eigenvalues": [[float(l.real), float(l.imag)] for l in self.eigenvalues],
            "damping_ratio": [None if not np.isfinite(z) else float(z) for z in self.damping],
        }


def eigen_diagnostics(model_or_A, tol: float = 1e-9) -> EigenReport:
    A = model_or_A.A if isinstance(model_or_A, LtiModel) else np.asarray(model_or_A, float)
    lam = np.linalg.eigvals(A)
    lam = lam[np.lexsort((lam.imag, lam.real))]
    mag = np.abs(lam)
    with np.errstate(invalid="ignore", divide="ignore"):
        zeta = np.where(mag > 0, -lam.real / mag, np.nan) + 0.0
    top = lam.real.max(initial=-math.inf)
    status = "stable" if top < -tol else ("marginal" if top <= tol else "unstable")
    return EigenReport(lam, zeta, status)
