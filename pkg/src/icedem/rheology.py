"""Four-parameter Burgers material in force-displacement form.

A Maxwell unit (instantaneous stiffness ``k_i`` in series with the flow
dashpot ``c_i``) is placed in series with a Kelvin unit (delayed stiffness
``k_d`` parallel to ``c_d``).  Displacements are overlaps, positive in
compression.

Temperature dependence of the viscosities follows empirical WLF fits around
the reference temperature 272.15 K; an Arrhenius law is kept as an
alternative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

GAS_CONSTANT = 8.314  # J/(mol K)
REFERENCE_TEMPERATURE = 272.15  # K, -1 degC
MIN_TEMPERATURE = 150.0
MAX_TEMPERATURE = 273.16

# (C1, C2) in the convention a_T = exp(-C1 dT / (C2 + dT)), dT = T - 272.15.
# "relaxation_time" is the ratio c_d / k_d.
WLF_CONSTANTS: dict[str, tuple[float, float]] = {
    "delayed": (-2.571, -6.154),
    "instantaneous": (-2.586, -7.706),
    "relaxation_time": (1.472e4, 2.431e5),
}


def _check_finite(**values) -> None:
    for name, value in values.items():
        ok = math.isfinite(value) if isinstance(value, float) else np.all(np.isfinite(value))
        if not ok:
            raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class BurgersParams:
    """Burgers constants at a reference temperature.

    Stiffnesses in N/m, viscosities in N*s/m, ``f0_b`` (load independent
    sintering force) in N, ``T_ref`` in K.
    """

    k_i: float
    k_d: float
    c_i: float
    c_d: float
    f0_b: float = 0.0
    T_ref: float = REFERENCE_TEMPERATURE

    def __post_init__(self):
        _check_finite(k_i=self.k_i, k_d=self.k_d, c_i=self.c_i, c_d=self.c_d,
                      f0_b=self.f0_b, T_ref=self.T_ref)
        for name in ("k_i", "k_d", "c_i", "c_d"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.f0_b < 0:
            raise ValueError(f"f0_b must be non-negative, got {self.f0_b}")

    @property
    def relaxation_rate(self) -> float:
        """Kelvin rate k_d / c_d in 1/s (the exponent rate of the creep law)."""
        return self.k_d / self.c_d

    def scaled(self, viscosity: float = 1.0, stiffness: float = 1.0) -> "BurgersParams":
        return replace(self, k_i=self.k_i * stiffness, k_d=self.k_d * stiffness,
                       c_i=self.c_i * viscosity, c_d=self.c_d * viscosity)

    def to_dict(self) -> dict:
        return {"k_i": self.k_i, "k_d": self.k_d, "c_i": self.c_i, "c_d": self.c_d,
                "f0_b": self.f0_b, "T_ref": self.T_ref}


@dataclass(frozen=True)
class BurgersState:
    """History of one Burgers element.

    Fields may be floats (normal direction) or 3-vectors (tangential
    direction); the update is linear so both work unchanged.
    """

    u_d: float | np.ndarray = 0.0
    f_prev: float | np.ndarray = 0.0
    u_prev: float | np.ndarray = 0.0


@dataclass(frozen=True)
class ComplexCompliance:
    g_storage: float
    g_loss: float
    g_mag: float
    phase: float


def _coefficients(params: BurgersParams, dt: float) -> tuple[float, float, float, float]:
    half = dt / (2.0 * params.c_d)
    A = 1.0 + params.k_d * half
    B = 1.0 - params.k_d * half
    C = half / A + 1.0 / params.k_i + dt / (2.0 * params.c_i)
    D = half / A - 1.0 / params.k_i + dt / (2.0 * params.c_i)
    return A, B, C, D


def burgers_trial_force(params: BurgersParams, state: BurgersState, u_new, dt: float):
    """Force at the end of the step for total displacement ``u_new``.

    The displacement entering the update is the increment ``u_new - u_prev``;
    with that reading the scheme is the trapezoidal discretisation of the
    series Maxwell + Kelvin element and converges to the analytic creep law.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    _check_finite(u_new=u_new, dt=dt)
    A, B, C, D = _coefficients(params, dt)
    du = u_new - state.u_prev
    return (du + state.u_d * (1.0 - B / A) - state.f_prev * D) / C


def burgers_commit(params: BurgersParams, state: BurgersState, f_new, u_new,
                   dt: float) -> BurgersState:
    """Advance the delayed displacement given the accepted end-of-step force.

    ``f_new`` may differ from the trial force (friction cap, no tension); the
    Kelvin unit is then updated with the force that was actually carried.
    """
    A, B, _, _ = _coefficients(params, dt)
    u_d = (B * state.u_d + dt / (2.0 * params.c_d) * (f_new + state.f_prev)) / A
    return BurgersState(u_d=u_d, f_prev=f_new, u_prev=u_new)


def burgers_step(params: BurgersParams, state: BurgersState, u_new, dt: float):
    """One central-difference step; returns ``(f_new, new_state)``."""
    f_new = burgers_trial_force(params, state, u_new, dt)
    return f_new, burgers_commit(params, state, f_new, u_new, dt)


def displacement_for_force(params: BurgersParams, state: BurgersState, f_new,
                           dt: float):
    """Inverse of :func:`burgers_trial_force`: total displacement giving ``f_new``."""
    A, B, C, D = _coefficients(params, dt)
    return state.u_prev + f_new * C + state.f_prev * D - state.u_d * (1.0 - B / A)


def _check_time(t) -> None:
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be non-negative")


def creep_displacement(params: BurgersParams, f0: float, t):
    """Displacement under a constant force ``f0`` applied at t = 0."""
    _check_time(t)
    rate = params.relaxation_rate
    return f0 * (1.0 / params.k_i + t / params.c_i
                 - np.expm1(-t * rate) / params.k_d)


def creep_rate(params: BurgersParams, f0: float, t):
    _check_time(t)
    rate = params.relaxation_rate
    return f0 * (1.0 / params.c_i + rate / params.k_d * np.exp(-t * rate))


def recovery_displacement(params: BurgersParams, f0: float, t_load: float, t):
    """Displacement at time ``t`` >= ``t_load`` after removing ``f0`` at ``t_load``.

    The elastic part vanishes, the flow part stays and the delayed part decays
    at the Kelvin rate.
    """
    rate = params.relaxation_rate
    u_d_at_unload = -f0 / params.k_d * math.expm1(-t_load * rate)
    return f0 * t_load / params.c_i + u_d_at_unload * np.exp(-(t - t_load) * rate)


def creep_compliance(params: BurgersParams, t):
    """Displacement per unit force held from t = 0; zero for t < 0."""
    t = np.asarray(t, dtype=float)
    tt = np.maximum(t, 0.0)
    J = 1.0 / params.k_i - np.expm1(-tt * params.relaxation_rate) / params.k_d + tt / params.c_i
    return np.where(t >= 0, J, 0.0)


def _compliance_integral(params: BurgersParams, t):
    t = np.maximum(np.asarray(t, dtype=float), 0.0)
    tau = 1.0 / params.relaxation_rate
    return t / params.k_i + (t + tau * np.expm1(-t / tau)) / params.k_d + t * t / (2 * params.c_i)


def creep_response(params: BurgersParams, knots, t):
    """Displacement under a piecewise-linear force history (superposition).

    ``knots`` is a list of ``(time, force)``; the force is zero before the
    first knot, jumps to its value there and is linear between knots.  Equal
    consecutive times give a step.
    """
    if not knots:
        raise ValueError("need at least one knot")
    times = [k[0] for k in knots]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("knot times must be non-decreasing")
    t = np.asarray(t, dtype=float)
    t0, f0 = knots[0]
    u = f0 * creep_compliance(params, t - t0)
    for (a, fa), (b, fb) in zip(knots, knots[1:]):
        if b == a:
            u = u + (fb - fa) * creep_compliance(params, t - a)
        else:
            slope = (fb - fa) / (b - a)
            u = u + slope * (_compliance_integral(params, t - a)
                             - _compliance_integral(params, t - b))
    return float(u) if u.ndim == 0 else u


def transverse_params(params: BurgersParams, nu: float) -> BurgersParams:
    """Shear counterparts of the four constants, P' = P / (2 (1 + nu))."""
    if not -1.0 < nu <= 0.5:
        raise ValueError(f"Poisson ratio must lie in (-1, 0.5], got {nu}")
    factor = 1.0 / (2.0 * (1.0 + nu))
    return replace(params, k_i=params.k_i * factor, k_d=params.k_d * factor,
                   c_i=params.c_i * factor, c_d=params.c_d * factor)


def compliance_polynomials(params: BurgersParams) -> tuple[float, float, float, float]:
    """(p1, p2, q1, q2) of (1 + p1 s + p2 s^2) f = (q1 s + q2 s^2) u."""
    k_i, k_d, c_i, c_d = params.k_i, params.k_d, params.c_i, params.c_d
    p1 = c_d / k_d + c_i * (1.0 / k_d + 1.0 / k_i)
    p2 = c_d * c_i / (k_d * k_i)
    q1 = c_i
    q2 = c_d * c_i / k_d
    return p1, p2, q1, q2


def complex_compliance(params: BurgersParams, omega: float) -> ComplexCompliance:
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    kelvin = params.k_d ** 2 + (omega * params.c_d) ** 2
    g_storage = 1.0 / params.k_i + params.k_d / kelvin
    g_loss = 1.0 / (omega * params.c_i) + omega * params.c_d / kelvin
    return ComplexCompliance(
        g_storage=g_storage,
        g_loss=g_loss,
        g_mag=math.hypot(g_storage, g_loss),
        phase=math.atan2(g_loss, g_storage),
    )


def wlf_shift(T: float, T0: float, C1: float, C2: float) -> float:
    """a_T = exp(-C1 (T - T0) / (C2 + T - T0))."""
    dT = T - T0
    denominator = C2 + dT
    if denominator == 0 or not math.isfinite(denominator):
        raise ValueError(f"singular WLF denominator at T={T}, T0={T0}, C2={C2}")
    return math.exp(-C1 * dT / denominator)


TemperatureChannel = Literal["instantaneous", "delayed", "relaxation_rate"]


def temperature_scale(T: float, which: TemperatureChannel,
                      T_ref: float = REFERENCE_TEMPERATURE) -> float:
    """Multiplier taking a constant known at ``T_ref`` to temperature ``T``."""
    if not MIN_TEMPERATURE <= T <= MAX_TEMPERATURE:
        raise ValueError(f"temperature {T} K outside [{MIN_TEMPERATURE}, {MAX_TEMPERATURE}]")
    return _wlf_fit(T, which) / _wlf_fit(T_ref, which)


def _wlf_fit(T: float, which: str) -> float:
    if which == "relaxation_rate":
        # the fit is for the relaxation time c_d / k_d
        C1, C2 = WLF_CONSTANTS["relaxation_time"]
        return 1.0 / wlf_shift(T, REFERENCE_TEMPERATURE, C1, C2)
    if which not in ("instantaneous", "delayed"):
        raise ValueError(f"unknown channel {which!r}")
    C1, C2 = WLF_CONSTANTS[which]
    return wlf_shift(T, REFERENCE_TEMPERATURE, C1, C2)


def viscosity_at_temperature(params: BurgersParams, T: float,
                             which: TemperatureChannel) -> float:
    base = {"instantaneous": params.c_i, "delayed": params.c_d,
            "relaxation_rate": params.relaxation_rate}[which]
    return base * temperature_scale(T, which, params.T_ref)


def arrhenius_rate(c: float, Q: float, T: float) -> float:
    """Creep rate c * exp(-Q / (R T))."""
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    if Q < 0:
        raise ValueError(f"activation energy must be non-negative, got {Q}")
    return c * math.exp(-Q / (GAS_CONSTANT * T))


def params_at_temperature(params: BurgersParams, T: float, model: str = "wlf",
                          activation_energy: float = 120e3) -> BurgersParams:
    """Material at temperature ``T``; stiffnesses are temperature independent.

    ``wlf`` scales both viscosities with their empirical fits and keeps
    ``k_i`` and ``k_d``.  ``arrhenius`` scales both viscosities by the inverse
    ratio of creep rates (viscosity ~ 1 / rate).
    """
    if model == "wlf":
        return replace(params, T_ref=T,
                       c_i=viscosity_at_temperature(params, T, "instantaneous"),
                       c_d=viscosity_at_temperature(params, T, "delayed"))
    if model == "arrhenius":
        factor = (arrhenius_rate(1.0, activation_energy, params.T_ref)
                  / arrhenius_rate(1.0, activation_energy, T))
        return replace(params, T_ref=T, c_i=params.c_i * factor, c_d=params.c_d * factor)
    raise ValueError(f"unknown temperature model {model!r}")
