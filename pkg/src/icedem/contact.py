"""Pair interactions for unbonded and bonded grains.

Normal compression uses the Burgers element; the tangential direction uses the
same element with transverse constants, capped by static/kinetic Coulomb
friction.  Rolling resistance is an elastic-plastic spring with a viscous
term.  ``assemble_pair`` blends contact and bond responses with the bonded
indicator and returns loads on both partners.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .bonds import BondLoads, rotation_matrix
from .rheology import (
    BurgersParams,
    BurgersState,
    burgers_commit,
    burgers_trial_force,
    transverse_params,
)


@dataclass
class FrictionConfig:
    mu_s: float = 0.5
    mu_k: float = 0.45
    mu_r: float = 0.05
    C_r: float = 0.0
    poisson: float = 0.3
    stick_speed: float = 1e-6

    def __post_init__(self):
        if not 0 <= self.mu_k <= self.mu_s:
            raise ValueError(f"need 0 <= mu_k <= mu_s, got mu_k={self.mu_k}, mu_s={self.mu_s}")
        if self.mu_r < 0 or self.C_r < 0:
            raise ValueError("rolling coefficients must be non-negative")


def _zero3() -> np.ndarray:
    return np.zeros(3)


def cross(a, b) -> np.ndarray:
    """3-vector cross product (np.cross is slow on single vectors)."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def norm(v) -> float:
    return math.sqrt(float(v @ v))


@dataclass
class ContactState:
    """Persistent per-pair history; discarded when the pair separates."""

    pair: tuple
    normal_burgers: BurgersState = field(default_factory=BurgersState)
    tangential_burgers: BurgersState = field(
        default_factory=lambda: BurgersState(u_d=np.zeros(3), f_prev=np.zeros(3), u_prev=np.zeros(3)))
    tangential_accum: np.ndarray = field(default_factory=_zero3)
    rolling_angle: np.ndarray = field(default_factory=_zero3)
    normal_prev: np.ndarray | None = None
    sliding: bool = False
    age: float = 0.0
    f_n: float = 0.0
    f_t: np.ndarray = field(default_factory=_zero3)
    sinter_blocked: bool = False


class Kinematics(NamedTuple):
    u_n: float            # overlap, positive in compression
    u_t_inc: np.ndarray   # tangential displacement increment of i relative to j
    v_rt: np.ndarray      # rolling displacement increment
    v_rn: np.ndarray      # twisting displacement increment
    n: np.ndarray         # unit normal from i towards j
    un_dot: float         # overlap rate, positive when approaching
    r_ij: float
    r_corr: float
    dw: np.ndarray        # relative angular velocity omega_i - omega_j
    distance: float


def pair_kinematics(x_i, x_j, v_i, v_j, w_i, w_j, r_i: float, r_j: float,
                    dt: float) -> Kinematics:
    d = np.subtract(x_j, x_i)
    dist = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
    if dist == 0.0:
        raise ValueError("coincident particle centres")
    n = d / dist
    u_n = r_i + r_j - dist
    v_ij = np.subtract(v_i, v_j)
    vn = float(v_ij @ n)
    dw = np.subtract(w_i, w_j)
    r_ij = r_i * r_j / (r_i + r_j)
    r_corr = (r_i - u_n) * (r_j - u_n) / (r_i + r_j - u_n)
    u_t_inc = dt * (v_ij - vn * n)
    v_rt = -r_corr * dt * cross(n, dw)
    v_rn = r_ij * dt * float(n @ dw) * n
    return Kinematics(u_n, u_t_inc, v_rt, v_rn, n, vn, r_ij, r_corr, dw, dist)


def wall_kinematics(x_i, v_i, w_i, r_i: float, point, normal, dt: float) -> Kinematics:
    """Particle against a static half-space; ``normal`` points into the domain."""
    m = np.asarray(normal, dtype=float)
    gap = float((np.asarray(x_i) - point) @ m)
    n = -m
    u_n = r_i - gap
    v_ij = np.asarray(v_i, dtype=float)
    vn = float(v_ij @ n)
    dw = np.asarray(w_i, dtype=float)
    r_corr = r_i - u_n
    u_t_inc = dt * (v_ij - vn * n)
    v_rt = -r_corr * dt * cross(n, dw)
    v_rn = r_i * dt * float(n @ dw) * n
    return Kinematics(u_n, u_t_inc, v_rt, v_rn, n, vn, r_i, r_corr, dw, gap)


def contact_kinematics(p_i, p_j, dt: float) -> Kinematics:
    """Overlap and relative motion increments for two particles."""
    return pair_kinematics(p_i.position, p_j.position, p_i.velocity, p_j.velocity,
                           p_i.angular_velocity, p_j.angular_velocity,
                           p_i.radius, p_j.radius, dt)


def normal_force(state: ContactState, params: BurgersParams, u_n: float,
                 dt: float) -> tuple[float, BurgersState]:
    """Compressive Burgers force for overlap ``u_n``; tension is never carried.

    When the trial force turns tensile the surfaces unload: the force is set
    to zero and the Kelvin unit relaxes under that zero force.
    """
    trial = burgers_trial_force(params, state.normal_burgers, u_n, dt)
    f = trial if trial > 0.0 else 0.0
    return f, burgers_commit(params, state.normal_burgers, f, u_n, dt)


def friction_force(f_t_trial, f_n: float, cfg: FrictionConfig, sliding: bool = False,
                   slip_speed: float = 0.0) -> tuple[np.ndarray, bool]:
    """Static/kinetic Coulomb rule on a trial tangential force.

    Below mu_s * f_n the contact sticks and the trial force is returned.
    Otherwise it slides with mu_k * f_n along the trial direction.  A contact
    that was already sliding keeps sliding until its slip speed falls below
    ``cfg.stick_speed``.
    """
    trial = np.asarray(f_t_trial, dtype=float)
    magnitude = norm(trial)
    still_sliding = sliding and slip_speed >= cfg.stick_speed
    if not still_sliding and magnitude < cfg.mu_s * f_n:
        return trial, False
    if magnitude == 0.0:
        return np.zeros(3), True
    return trial * (cfg.mu_k * f_n / magnitude), True


def rolling_resistance(theta_r, theta_dot, k_t: float, r_ij: float, f_n: float,
                       cfg: FrictionConfig) -> np.ndarray:
    """M_r = -k_r * Gamma * theta_r - C_r * theta_dot with k_r = k_t * r_ij**2.

    Gamma clamps the elastic moment at the plastic limit mu_r * r_ij * f_n.
    """
    theta_r = np.asarray(theta_r, dtype=float)
    k_r = k_t * r_ij * r_ij
    elastic = k_r * theta_r
    magnitude = norm(elastic)
    limit = cfg.mu_r * r_ij * max(f_n, 0.0)
    gamma = 1.0 if magnitude <= limit else limit / magnitude
    return -gamma * elastic - cfg.C_r * np.asarray(theta_dot, dtype=float)


class ContactLoads(NamedTuple):
    f_n: float             # compressive, >= 0
    f_t: np.ndarray        # tangential resistance along the slip of i relative to j
    m_r: np.ndarray        # rolling moment on i


class PairLoads(NamedTuple):
    force_i: np.ndarray    # force on i; j receives the exact negation
    torque_i: np.ndarray
    torque_j: np.ndarray


def update_contact(state: ContactState, kin: Kinematics, params: BurgersParams,
                   cfg: FrictionConfig, dt: float) -> ContactLoads:
    """Advance a contact by one step and return its loads (state updated in place).

    Tangential history is rotated with the contact normal.  A bonded pair
    still advances its contact history; :func:`assemble_pair` then replaces
    the friction channel by the bond.
    """
    if state.normal_prev is not None and not np.array_equal(state.normal_prev, kin.n):
        _rotate_contact(state, state.normal_prev, kin.n)
    state.normal_prev = kin.n

    f_n, state.normal_burgers = normal_force(state, params, kin.u_n, dt)

    shear = _transverse(params, cfg.poisson)
    accum = state.tangential_accum + kin.u_t_inc
    accum -= (accum @ kin.n) * kin.n
    trial = burgers_trial_force(shear, state.tangential_burgers, accum, dt)
    slip_speed = norm(kin.u_t_inc) / dt
    f_t, sliding = friction_force(trial, f_n, cfg, state.sliding, slip_speed)
    state.tangential_burgers = burgers_commit(shear, state.tangential_burgers, f_t, accum, dt)
    state.tangential_accum = accum
    state.sliding = sliding

    dtheta = kin.dw - (kin.dw @ kin.n) * kin.n
    theta_r = state.rolling_angle + dt * dtheta
    m_r = rolling_resistance(theta_r, dtheta, shear.k_i, kin.r_ij, f_n, cfg)
    # plastic rolling: the stored angle never exceeds the elastic limit
    limit = cfg.mu_r * kin.r_ij * f_n
    k_r = shear.k_i * kin.r_ij ** 2
    norm_theta = norm(theta_r)
    if k_r * norm_theta > limit:
        theta_r = theta_r * (limit / (k_r * norm_theta))
    state.rolling_angle = theta_r
    state.age += dt
    state.f_n = f_n
    state.f_t = f_t
    return ContactLoads(f_n, f_t, m_r)


@lru_cache(maxsize=64)
def _transverse(params: BurgersParams, nu: float) -> BurgersParams:
    return transverse_params(params, nu)


def _rotate_contact(state: ContactState, n_old, n_new) -> None:
    R = rotation_matrix(n_old, n_new)
    tb = state.tangential_burgers
    state.tangential_burgers = BurgersState(u_d=R @ tb.u_d, f_prev=R @ tb.f_prev,
                                            u_prev=R @ tb.u_prev)
    state.tangential_accum = R @ state.tangential_accum
    state.rolling_angle = R @ state.rolling_angle


def assemble_pair(contact: ContactLoads | None, bond: BondLoads | None, n,
                  un_dot: float, r_i: float, r_j: float) -> PairLoads:
    """Blend contact and bond loads with the bonded indicator.

    Normal: the contact force always acts; the bond's tensile force is added
    only while the pair is unloading (``un_dot <= 0``).  Tangential forces and
    torques come from the bond when bonded, from friction otherwise.  The
    tangential force acts at the contact point, so each partner also gets a
    lever torque r * (n x F).
    """
    n = np.asarray(n, dtype=float)
    zeta = 1.0 if bond is not None and bond.active else 0.0
    f_n_c = contact.f_n if contact is not None else 0.0
    normal = -f_n_c
    if zeta and un_dot <= 0.0:
        normal += bond.f_n
    if zeta:
        tangential = bond.f_t
        couple = -(bond.t_phi + bond.t_theta)
    elif contact is not None:
        tangential = contact.f_t
        couple = contact.m_r
    else:
        tangential = np.zeros(3)
        couple = np.zeros(3)
    force_i = normal * n - tangential
    lever = cross(n, -tangential)
    return PairLoads(force_i, r_i * lever + couple, r_j * lever - couple)
