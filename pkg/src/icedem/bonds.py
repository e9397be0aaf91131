"""Sintered bonds as damageable viscoelastic beams.

A bond is created when two grains are pressed together.  Its cross-section
follows the indentation (A_b = pi * r_ij * u_n) and never shrinks.  Loads are
Kelvin beam responses in tension, shear, torsion and bending; once a
strength criterion trips the bond softens exponentially and finally breaks.

Displacement channels are stored as accumulated vectors in the global frame
and carried along when the pair normal rotates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .rheology import BurgersParams

BondState = Literal["intact", "softening", "broken"]
FailureMode = Literal["intact", "tensile_failure", "shear_failure"]
CHANNELS = ("normal", "shear", "twist", "bend")


@dataclass
class FractureConfig:
    """Strength and softening constants shared by all bonds of a material.

    ``G_f`` is in Pa/m so that ``G_f / tau`` is an inverse softening length.
    ``tau_n`` is the tensile strength; when ``None`` the Hall-Petch strength is
    used.  ``modulus_scale`` converts the calibrated stiffness/viscosity
    numbers into beam moduli (Pa per unit of ``(k_i + k_d) * d``).
    """

    G_f: float = 1e12
    tau_0: float = 0.6e6
    k_hp: float = 0.002e6
    x_hp: float = 0.5
    mu_s: float = 0.5
    tau_n: float | None = None
    cohesion_mode: Literal["hall_petch", "constant"] = "hall_petch"
    cohesion: float = 0.0
    broken_fraction: float = 0.01
    modulus_scale: float = 1.0

    def __post_init__(self):
        if self.tau_0 <= 0:
            raise ValueError("tau_0 must be positive")
        if self.mu_s < 0:
            raise ValueError("mu_s must be non-negative")
        if self.G_f <= 0:
            raise ValueError("G_f must be positive")
        if not 0 < self.broken_fraction < 1:
            raise ValueError("broken_fraction must lie in (0, 1)")


@dataclass
class BondLoads:
    """Bond response: tension-positive normal force plus shear/torque vectors."""

    f_n: float
    f_t: np.ndarray
    t_phi: np.ndarray
    t_theta: np.ndarray
    active: bool = True

    def magnitudes(self) -> np.ndarray:
        return np.array([abs(self.f_n), np.linalg.norm(self.f_t),
                         np.linalg.norm(self.t_phi), np.linalg.norm(self.t_theta)])


def _zero3() -> np.ndarray:
    return np.zeros(3)


@dataclass
class Bond:
    pair: tuple[int, int]
    r_ij: float
    A_b: float
    l_b: float
    modulus_per_depth: float
    viscosity_per_depth: float
    indentation: float
    tau_n: float
    cohesion: float
    f0_b: float = 0.0
    normal_prev: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    state: BondState = "intact"
    created_at: float = 0.0
    # accumulated kinematics (global frame)
    elongation: float = 0.0
    shear_disp: np.ndarray = field(default_factory=_zero3)
    twist: np.ndarray = field(default_factory=_zero3)
    bend: np.ndarray = field(default_factory=_zero3)
    # last evaluated loads (global frame)
    stored_normal: float = 0.0
    stored_shear: np.ndarray = field(default_factory=_zero3)
    stored_twist: np.ndarray = field(default_factory=_zero3)
    stored_bend: np.ndarray = field(default_factory=_zero3)
    # softening bookkeeping, ordered as CHANNELS
    limits: np.ndarray = field(default_factory=lambda: np.zeros(4))
    limit_loads: np.ndarray = field(default_factory=lambda: np.zeros(4))
    softening_excess: np.ndarray = field(default_factory=lambda: np.zeros(4))
    tau_s_at_failure: float = 0.0
    failure_mode: FailureMode = "intact"
    failure_load: float = 0.0  # total tensile force when the criterion tripped

    @property
    def r_b(self) -> float:
        return math.sqrt(self.A_b / math.pi)

    @property
    def E(self) -> float:
        return self.modulus_per_depth * self.indentation

    @property
    def G(self) -> float:
        return self.E / 2.6

    @property
    def eta(self) -> float:
        return self.viscosity_per_depth * self.indentation

    @property
    def tensile_capacity(self) -> float:
        """Total tensile force the bond can carry: f0_b + tau_n * A_b."""
        return self.f0_b + self.tau_n * self.A_b


def bond_elastic_constants(params: BurgersParams, d: float,
                           scale: float = 1.0) -> tuple[float, float, float]:
    """Beam moduli ``(E, G, eta)`` for an indentation ``d``.

    E = (k_i + k_d) d, G = E / (2 (1 + 0.3)), eta_n = eta_t = c_i d, each
    multiplied by ``scale``.
    """
    if not d > 0:
        raise ValueError(f"indentation must be positive, got {d}")
    E = scale * (params.k_i + params.k_d) * d
    return E, E / 2.6, scale * params.c_i * d


def hall_petch_strength(cfg: FractureConfig, d_grain: float) -> float:
    if not d_grain > 0:
        raise ValueError(f"grain size must be positive, got {d_grain}")
    return cfg.tau_0 + cfg.k_hp * d_grain ** cfg.x_hp


def create_bond(pair: tuple[int, int], u_n: float, r_ij: float, now: float,
                params: BurgersParams, cfg: FractureConfig | None = None, *,
                l_b: float, normal=None, d_grain: float | None = None) -> Bond:
    """New bond for a pair pressed together with overlap ``u_n``.

    ``d_grain`` defaults to the diameter of equal spheres with reduced radius
    ``r_ij``.
    """
    if not u_n > 0:
        raise ValueError(f"bond needs a compressive overlap, got u_n={u_n}")
    cfg = cfg or FractureConfig()
    tau_ice = hall_petch_strength(cfg, d_grain if d_grain is not None else 4.0 * r_ij)
    cohesion = tau_ice if cfg.cohesion_mode == "hall_petch" else cfg.cohesion
    return Bond(
        pair=tuple(pair),
        r_ij=r_ij,
        A_b=math.pi * r_ij * u_n,
        l_b=l_b,
        modulus_per_depth=cfg.modulus_scale * (params.k_i + params.k_d),
        viscosity_per_depth=cfg.modulus_scale * params.c_i,
        indentation=u_n,
        tau_n=cfg.tau_n if cfg.tau_n is not None else tau_ice,
        cohesion=cohesion,
        f0_b=params.f0_b,
        normal_prev=np.array([0.0, 0.0, 1.0]) if normal is None else np.array(normal, float),
        created_at=now,
    )


def grow_bond(bond: Bond, f_n_c: float, u_n: float, dt: float | None = None) -> Bond:
    """Widen the neck to the current indentation while the pair is loaded.

    Area follows the running maximum of pi * r_ij * u_n; updated in place.
    """
    if bond.state != "intact" or f_n_c <= 0 or u_n <= bond.indentation:
        return bond
    bond.indentation = u_n
    bond.A_b = math.pi * bond.r_ij * u_n
    return bond


def bond_forces(bond: Bond, u_n, u_t, phi, theta, rates) -> BondLoads:
    """Kelvin beam response to the accumulated displacements.

    ``rates`` is ``(du_n, du_t, dphi, dtheta)``, the time derivatives of the
    four channels.  Linear in (displacement, rate) for each channel.
    """
    if bond.state == "broken":
        return BondLoads(0.0, np.zeros(3), np.zeros(3), np.zeros(3), active=False)
    du_n, du_t, dphi, dtheta = rates
    A, l_b = bond.A_b, bond.l_b
    r_b = bond.r_b
    E, G, eta = bond.E, bond.G, bond.eta
    polar = math.pi * r_b ** 4
    f_n = eta * A * du_n / l_b + E * A * u_n / l_b
    f_t = eta * A * np.asarray(du_t) / (2 * r_b) + G * A * np.asarray(u_t) / (2 * r_b) \
        if r_b > 0 else np.zeros(3)
    t_phi = eta * polar * np.asarray(dphi) / (2 * l_b) + G * polar * np.asarray(phi) / (2 * l_b)
    t_theta = eta * polar * np.asarray(dtheta) / (4 * l_b) + E * polar * np.asarray(theta) / (4 * l_b)
    return BondLoads(float(f_n), f_t, t_phi, t_theta)


def shear_strength(bond: Bond, f_n_c: float, mu_s: float) -> float:
    """Mohr-Coulomb strength in stress units (cohesion taken as a stress)."""
    if bond.A_b <= 0:
        return math.inf if bond.cohesion > 0 else 0.0
    return max(f_n_c, 0.0) / bond.A_b * mu_s + bond.cohesion


def failure_ratios(bond: Bond, f_n_b: float, f_t_b: float, t_theta: float,
                   t_phi: float, f_n_c: float, cfg: FractureConfig) -> tuple[float, float]:
    """(tensile, shear) load-to-strength ratios; a ratio >= 1 means failure.

    Written with forces so that a vanishing bond area stays well defined.
    """
    r_b = bond.r_b
    bending = 4.0 * abs(t_theta) / r_b if r_b > 0 else 0.0
    torsion = 4.0 * abs(t_phi) / r_b if r_b > 0 else 0.0
    tensile_load = f_n_b + bending
    tensile_cap = bond.tau_n * bond.A_b
    shear_load = abs(f_t_b) + torsion
    shear_cap = max(f_n_c, 0.0) * cfg.mu_s + bond.cohesion * bond.A_b
    return _ratio(tensile_load, tensile_cap), _ratio(shear_load, shear_cap)


def _ratio(load: float, capacity: float) -> float:
    if capacity > 0:
        return load / capacity
    return math.inf if load > 0 else 0.0


def check_failure(bond: Bond, f_n_b: float, f_t_b: float, t_theta: float, t_phi: float,
                  f_n_c: float, cfg: FractureConfig) -> FailureMode:
    """Combined tension+bending and Mohr-Coulomb shear+torsion criteria.

    When both trip in the same step the larger overshoot wins; ties go to
    tension.
    """
    tensile, shear = failure_ratios(bond, f_n_b, f_t_b, t_theta, t_phi, f_n_c, cfg)
    if tensile < 1.0 and shear < 1.0:
        return "intact"
    return "tensile_failure" if tensile >= shear else "shear_failure"


def start_softening(bond: Bond, loads: BondLoads, mode: FailureMode, f_n_c: float,
                    cfg: FractureConfig) -> Bond:
    """Freeze the limit displacements and loads at failure onset."""
    bond.state = "softening"
    bond.failure_mode = mode
    bond.limits = np.array([
        max(bond.elongation, 0.0),
        float(np.linalg.norm(bond.shear_disp)),
        float(np.linalg.norm(bond.twist)),
        float(np.linalg.norm(bond.bend)),
    ])
    normal = max(loads.f_n, 0.0) + (bond.f0_b if bond.elongation > 0 else 0.0)
    bond.limit_loads = np.array([normal, np.linalg.norm(loads.f_t),
                                 np.linalg.norm(loads.t_phi), np.linalg.norm(loads.t_theta)])
    bond.failure_load = normal
    bond.tau_s_at_failure = shear_strength(bond, f_n_c, cfg.mu_s)
    bond.softening_excess = np.zeros(4)
    return bond


def _decay_rates(bond: Bond, cfg: FractureConfig) -> np.ndarray:
    tau_s = bond.tau_s_at_failure if bond.tau_s_at_failure > 0 else bond.cohesion
    r_b = bond.r_b
    inv_n = cfg.G_f / bond.tau_n if bond.tau_n > 0 else math.inf
    inv_s = cfg.G_f / tau_s if tau_s > 0 else math.inf
    return np.array([inv_n, inv_s, inv_s * r_b, inv_n * r_b])


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    return v / n if n > 0 else np.zeros(3)


def softening_forces(bond: Bond, u_n: float, u_t, phi, theta,
                     cfg: FractureConfig | None = None) -> BondLoads:
    """Post-peak response: each channel decays exponentially past its limit.

    Channel value = limit_load * exp(-(G_f / tau) * (u - u_limit)), with the
    angular channels scaled by the bond radius inside the exponent.  Damage is
    irreversible: the exponent uses the larger of the current and the stored
    maximum excess.  Below the limit displacement the response unloads along
    the secant.  Vectors keep the direction of the current displacement.
    """
    if bond.state != "softening":
        raise ValueError(f"softening_forces needs a softening bond, state is {bond.state}")
    cfg = cfg or FractureConfig()
    vectors = [None, np.asarray(u_t, float), np.asarray(phi, float), np.asarray(theta, float)]
    current = np.array([u_n, np.linalg.norm(vectors[1]), np.linalg.norm(vectors[2]),
                        np.linalg.norm(vectors[3])])
    rates = _decay_rates(bond, cfg)
    excess = np.maximum(current - bond.limits, bond.softening_excess)
    with np.errstate(invalid="ignore", over="ignore"):
        decay = np.where(excess > 0, np.exp(-rates * excess), 1.0)
    secant = np.where((current < bond.limits) & (bond.limits > 0),
                      np.clip(current / np.where(bond.limits > 0, bond.limits, 1.0), 0.0, 1.0),
                      1.0)
    values = bond.limit_loads * decay * secant
    f_n = values[0] if u_n > 0 else 0.0
    return BondLoads(
        float(f_n),
        values[1] * _unit(vectors[1]),
        values[2] * _unit(vectors[2]),
        values[3] * _unit(vectors[3]),
    )


def update_softening(bond: Bond, u_n: float, u_t, phi, theta,
                     cfg: FractureConfig | None = None) -> Bond:
    """Record the running maximum excess and break the bond when spent.

    The bond breaks when every loaded channel has decayed below
    ``broken_fraction`` of its limit load, or when the tensile channel alone
    has (the crack has opened through the section).
    """
    cfg = cfg or FractureConfig()
    current = np.array([u_n, np.linalg.norm(u_t), np.linalg.norm(phi), np.linalg.norm(theta)])
    bond.softening_excess = np.maximum(bond.softening_excess,
                                       np.maximum(current - bond.limits, 0.0))
    with np.errstate(invalid="ignore"):
        exponent = np.where(bond.softening_excess > 0,
                            _decay_rates(bond, cfg) * bond.softening_excess, 0.0)
    loaded = bond.limit_loads > 0
    # 1e-12 absorbs rounding when the decay lands exactly on the threshold
    spent = exponent >= -math.log(cfg.broken_fraction) - 1e-12
    if not loaded.any() or np.all(spent[loaded]) or (loaded[0] and spent[0]):
        bond.state = "broken"
    return bond


def rotation_matrix(n_old, n_new) -> np.ndarray:
    """Rotation taking unit vector ``n_old`` onto ``n_new`` via a unit quaternion."""
    axis = np.cross(n_old, n_new)
    s = float(np.linalg.norm(axis))
    c = float(np.dot(n_old, n_new))
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        # half turn about any axis perpendicular to n_old
        helper = np.array([1.0, 0.0, 0.0]) if abs(n_old[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = np.cross(n_old, helper)
        s = float(np.linalg.norm(axis))
        c = -1.0
    angle = math.atan2(s, c) if c > -1.0 else math.pi
    half = 0.5 * angle
    w = math.cos(half)
    x, y, z = axis / s * math.sin(half)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotate_bond_frame(bond: Bond, n_new) -> Bond:
    """Carry stored vectors along with the rotation of the pair normal (in place)."""
    n_new = np.asarray(n_new, dtype=float)
    R = rotation_matrix(bond.normal_prev, n_new)
    for name in ("shear_disp", "twist", "bend", "stored_shear", "stored_twist", "stored_bend"):
        setattr(bond, name, R @ getattr(bond, name))
    bond.normal_prev = n_new.copy()
    return bond
