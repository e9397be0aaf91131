"""Particle state, the Gear predictor-corrector and the simulation step.

One step predicts every particle, finds candidate pairs on a cell grid,
evaluates contacts and bonds at the predicted state, sums the pair loads in a
fixed order and corrects.  Pair evaluations only touch their own history, so
they can run on a worker pool; the reduction is always sequential, which keeps
trajectories independent of the worker count.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bonds import (
    Bond,
    FractureConfig,
    bond_forces,
    check_failure,
    create_bond,
    grow_bond,
    rotate_bond_frame,
    softening_forces,
    start_softening,
    update_softening,
)
from .contact import (
    ContactState,
    FrictionConfig,
    Kinematics,
    PairLoads,
    assemble_pair,
    norm,
    pair_kinematics,
    update_contact,
    wall_kinematics,
)
from .errors import NumericalError
from .rheology import BurgersParams, params_at_temperature

ICE_DENSITY = 917.0  # kg/m^3
SMALL_SCENE = 16


def _vec(v=None) -> np.ndarray:
    return np.zeros(3) if v is None else np.array(v, dtype=float)


@dataclass
class Particle:
    id: int
    radius: float
    mass: float
    inertia: float
    position: np.ndarray = field(default_factory=_vec)
    velocity: np.ndarray = field(default_factory=_vec)
    acceleration: np.ndarray = field(default_factory=_vec)
    jerk: np.ndarray = field(default_factory=_vec)
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    angular_velocity: np.ndarray = field(default_factory=_vec)
    angular_acceleration: np.ndarray = field(default_factory=_vec)
    angular_jerk: np.ndarray = field(default_factory=_vec)
    temperature: float | None = None
    # kinematic particles follow their velocity and ignore forces
    fixed: bool = False
    external_force: np.ndarray = field(default_factory=_vec)

    def __post_init__(self):
        for name in ("radius", "mass", "inertia"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"particle {self.id}: {name} must be positive, got {value}")
        for name in ("position", "velocity", "acceleration", "jerk", "angular_velocity",
                     "angular_acceleration", "angular_jerk", "external_force"):
            setattr(self, name, np.array(getattr(self, name), dtype=float).reshape(3))
        q = np.array(self.orientation, dtype=float).reshape(4)
        self.orientation = q / np.linalg.norm(q)


def sphere(id: int, radius: float, position=None, density: float = ICE_DENSITY,
           **kwargs) -> Particle:
    """Solid sphere of the given density."""
    mass = density * 4.0 / 3.0 * math.pi * radius ** 3
    return Particle(id=id, radius=radius, mass=mass, inertia=0.4 * mass * radius ** 2,
                    position=_vec(position), **kwargs)


@dataclass
class Wall:
    """Static half-space; ``normal`` points into the domain."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        self.point = np.array(self.point, dtype=float)
        n = np.array(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if not norm > 0:
            raise ValueError("wall normal must be non-zero")
        self.normal = n / norm


def box_walls(lower, upper) -> list[Wall]:
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    walls = []
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = 1.0
        walls.append(Wall(lower.copy(), e))
        walls.append(Wall(upper.copy(), -e))
    return walls


@dataclass
class Material:
    params: BurgersParams
    fracture: FractureConfig = field(default_factory=FractureConfig)
    friction: FrictionConfig = field(default_factory=FrictionConfig)


@dataclass
class Scene:
    particles: list[Particle]
    material: Material
    dt: float
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    time: float = 0.0
    temperature: float | None = None
    walls: list[Wall] = field(default_factory=list)
    contacts: dict = field(default_factory=dict)
    wall_contacts: dict = field(default_factory=dict)
    bonds: dict = field(default_factory=dict)
    # pairs whose bond broke while still touching; no re-sintering until separation
    blocked: set = field(default_factory=set)
    sintering: bool = True
    skin: float | None = None
    threads: int = 1
    step_count: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        self.gravity = np.array(self.gravity, dtype=float).reshape(3)
        if self.temperature is None:
            self.temperature = self.material.params.T_ref
        ids = [p.id for p in self.particles]
        if ids != list(range(len(ids))):
            raise ValueError("particle ids must be 0..N-1 in order")
        self._param_cache: dict = {}
        self._pool: ThreadPoolExecutor | None = None
        self._warned_dt = False

    def params_at(self, T: float) -> BurgersParams:
        base = self.material.params
        if T == base.T_ref:
            return base
        if T not in self._param_cache:
            self._param_cache[T] = params_at_temperature(base, T)
        return self._param_cache[T]


# ----------------------------------------------------------------------------
# integrator


def gear_predict(p: Particle, dt: float) -> Particle:
    """Taylor prediction of position, velocity and acceleration (in place)."""
    a, j = p.acceleration, p.jerk
    p.position = p.position + p.velocity * dt + a * (dt * dt / 2) + j * (dt ** 3 / 6)
    p.velocity = p.velocity + a * dt + j * (dt * dt / 2)
    p.acceleration = a + j * dt
    alpha, beta = p.angular_acceleration, p.angular_jerk
    p.angular_velocity = p.angular_velocity + alpha * dt + beta * (dt * dt / 2)
    p.angular_acceleration = alpha + beta * dt
    return p


def gear_correct(p: Particle, total_force, g, dt: float, torque=None) -> Particle:
    """Correct the prediction with the force evaluated at the predicted state.

    delta = f/m + g - a_p; a += delta, v += 5/12 delta dt, x += 1/12 delta dt^2,
    jerk += delta/dt.  Rotation uses the same coefficients without a position.
    """
    delta = np.asarray(total_force) / p.mass + g - p.acceleration
    p.acceleration = p.acceleration + delta
    p.velocity = p.velocity + delta * (5.0 / 12.0 * dt)
    p.position = p.position + delta * (dt * dt / 12.0)
    p.jerk = p.jerk + delta / dt
    if torque is not None:
        delta_w = np.asarray(torque) / p.inertia - p.angular_acceleration
        p.angular_acceleration = p.angular_acceleration + delta_w
        p.angular_velocity = p.angular_velocity + delta_w * (5.0 / 12.0 * dt)
        p.angular_jerk = p.angular_jerk + delta_w / dt
    return p


def quaternion_multiply(a, b) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quaternion_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def update_orientation(p: Particle, dt: float) -> Particle:
    """Rotate the orientation by omega * dt (space frame) and renormalise."""
    w = p.angular_velocity
    angle = math.sqrt(float(w @ w)) * dt
    if angle > 0.0:
        axis = w * (dt / angle)
        half = 0.5 * angle
        dq = np.concatenate(([math.cos(half)], math.sin(half) * axis))
        q = quaternion_multiply(dq, p.orientation)
        p.orientation = q / math.sqrt(float(q @ q))
    return p


def relative_orientation(q_i, q_j) -> np.ndarray:
    """Quaternion taking orientation ``q_j`` to ``q_i``."""
    conj = np.array([q_j[0], -q_j[1], -q_j[2], -q_j[3]])
    return quaternion_multiply(q_i, conj)


def critical_dt(scene: Scene) -> float:
    """Stability estimate 0.1 * sqrt(m_min / k_i) over the force-driven particles."""
    masses = [p.mass for p in scene.particles if not p.fixed]
    if not masses:
        return math.inf
    m_min = min(masses)
    return 0.1 * math.sqrt(m_min / scene.material.params.k_i)


# ----------------------------------------------------------------------------
# neighbour search


def neighbor_search(scene: Scene) -> list[tuple[int, int]]:
    """Sorted pairs with surface gap below the skin, plus bonded pairs."""
    particles = scene.particles
    pairs = set(scene.bonds)
    if len(particles) < 2:
        return sorted(pairs)
    if len(particles) <= SMALL_SCENE:
        radii = [p.radius for p in particles]
        skin = scene.skin if scene.skin is not None else 0.1 * min(radii)
        for i, p in enumerate(particles):
            for j in range(i + 1, len(particles)):
                d = p.position - particles[j].position
                if math.sqrt(float(d @ d)) - radii[i] - radii[j] < skin:
                    pairs.add((i, j))
        return sorted(pairs)
    x = np.array([p.position for p in particles])
    r = np.array([p.radius for p in particles])
    skin = scene.skin if scene.skin is not None else 0.1 * float(r.min())
    pairs.update(candidate_pairs(x, r, skin))
    return sorted(pairs)


def candidate_pairs(x: np.ndarray, r: np.ndarray, skin: float) -> list[tuple[int, int]]:
    """All (i, j), i < j, with |x_i - x_j| - r_i - r_j < skin, via a uniform grid."""
    cell = 2.0 * float(r.max()) + skin
    keys = np.floor(x / cell).astype(np.int64)
    grid: dict[tuple, list[int]] = {}
    for idx, key in enumerate(map(tuple, keys)):
        grid.setdefault(key, []).append(idx)
    members = {k: np.array(v) for k, v in grid.items()}
    offsets = [(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)]
    found = []
    for key, ids in members.items():
        near = [members[k] for k in ((key[0] + a, key[1] + b, key[2] + c) for a, b, c in offsets)
                if k in members]
        others = np.concatenate(near)
        for i in ids:
            js = others[others > i]
            if js.size == 0:
                continue
            d = np.linalg.norm(x[js] - x[i], axis=1) - r[js] - r[i]
            found.extend((int(i), int(j)) for j in js[d < skin])
    found.sort()
    return found


def brute_force_pairs(x: np.ndarray, r: np.ndarray, skin: float) -> list[tuple[int, int]]:
    n = len(r)
    out = []
    for i in range(n):
        d = np.linalg.norm(x[i + 1:] - x[i], axis=1) - r[i + 1:] - r[i]
        out.extend((i, i + 1 + int(k)) for k in np.nonzero(d < skin)[0])
    return out


# ----------------------------------------------------------------------------
# pair evaluation


@dataclass
class PairResult:
    pair: tuple[int, int]
    loads: PairLoads | None
    contact: ContactState | None
    bond: Bond | None
    broke: bool = False


def _pair_params(scene: Scene, p_i: Particle, p_j: Particle) -> BurgersParams:
    if p_i.temperature is None and p_j.temperature is None:
        return scene.params_at(scene.temperature)
    T_i = scene.temperature if p_i.temperature is None else p_i.temperature
    T_j = scene.temperature if p_j.temperature is None else p_j.temperature
    return scene.params_at(0.5 * (T_i + T_j))


def _advance_bond(bond: Bond, kin: Kinematics, f_n_c: float, dt: float,
                  cfg: FractureConfig):
    """Accumulate bond kinematics and return its loads for this step."""
    n = kin.n
    if not np.array_equal(bond.normal_prev, n):
        rotate_bond_frame(bond, n)
    bond.l_b = kin.distance
    separation = -kin.un_dot
    if f_n_c > 0.0:
        # the neck is squeezed together with the contact; tension starts
        # only once the contact has unloaded completely
        bond.elongation = 0.0
    else:
        bond.elongation = max(bond.elongation + separation * dt, 0.0)
    rate_n = separation if bond.elongation > 0.0 else 0.0
    shear = bond.shear_disp + kin.u_t_inc
    bond.shear_disp = shear - (shear @ n) * n
    spin = float(kin.dw @ n)
    twist_rate = spin * n
    bend_rate = kin.dw - twist_rate
    bond.twist = bond.twist + twist_rate * dt
    bond.bend = bond.bend + bend_rate * dt
    rates = (rate_n, kin.u_t_inc / dt, twist_rate, bend_rate)

    if bond.state == "intact":
        grow_bond(bond, f_n_c, kin.u_n)
        loads = bond_forces(bond, bond.elongation, bond.shear_disp, bond.twist, bond.bend, rates)
        mode = check_failure(bond, loads.f_n, norm(loads.f_t), norm(loads.t_theta),
                             norm(loads.t_phi), f_n_c, cfg)
        if mode == "intact":
            if bond.elongation > 0.0:
                # load-independent adhesion acts in parallel with the beam
                loads.f_n += bond.f0_b
        else:
            start_softening(bond, loads, mode, f_n_c, cfg)
    if bond.state == "softening":
        loads = softening_forces(bond, bond.elongation, bond.shear_disp, bond.twist,
                                 bond.bend, cfg)
        update_softening(bond, bond.elongation, bond.shear_disp, bond.twist, bond.bend, cfg)
    bond.stored_normal = loads.f_n
    bond.stored_shear = loads.f_t
    bond.stored_twist = loads.t_phi
    bond.stored_bend = loads.t_theta
    if bond.state == "broken":
        loads.active = False
    return loads


def evaluate_pair(scene: Scene, pair: tuple[int, int]) -> PairResult:
    """Contact + bond response of one pair at the predicted state.

    Only this pair's history objects are touched, so calls for different
    pairs are independent.
    """
    try:
        return _evaluate_pair(scene, pair)
    except (ValueError, FloatingPointError, ZeroDivisionError) as exc:
        raise NumericalError(f"pair {pair}: {exc} at t={scene.time:.6g} s") from None


def _evaluate_pair(scene: Scene, pair: tuple[int, int]) -> PairResult:
    i, j = pair
    p_i, p_j = scene.particles[i], scene.particles[j]
    dt = scene.dt
    kin = pair_kinematics(p_i.position, p_j.position, p_i.velocity, p_j.velocity,
                          p_i.angular_velocity, p_j.angular_velocity,
                          p_i.radius, p_j.radius, dt)
    contact = scene.contacts.get(pair)
    bond = scene.bonds.get(pair)
    if kin.u_n <= 0.0 and bond is None:
        return PairResult(pair, None, None, None)
    params = _pair_params(scene, p_i, p_j)
    c_loads = None
    if kin.u_n > 0.0:
        if contact is None:
            contact = ContactState(pair)
        c_loads = update_contact(contact, kin, params, scene.material.friction, dt)
    else:
        contact = None
    f_n_c = c_loads.f_n if c_loads is not None else 0.0
    b_loads = None
    broke = False
    if bond is not None:
        b_loads = _advance_bond(bond, kin, f_n_c, dt, scene.material.fracture)
        broke = bond.state == "broken"
    elif (scene.sintering and contact is not None and f_n_c > 0.0
          and pair not in scene.blocked):
        bond = create_bond(pair, kin.u_n, kin.r_ij, scene.time, params, scene.material.fracture,
                           l_b=kin.distance, normal=kin.n)
    loads = assemble_pair(c_loads, b_loads, kin.n, kin.un_dot, p_i.radius, p_j.radius)
    return PairResult(pair, loads, contact, bond, broke)


def _evaluate_wall(scene: Scene, i: int, k: int):
    p = scene.particles[i]
    wall = scene.walls[k]
    kin = wall_kinematics(p.position, p.velocity, p.angular_velocity, p.radius,
                          wall.point, wall.normal, scene.dt)
    key = (i, k)
    if kin.u_n <= 0.0:
        scene.wall_contacts.pop(key, None)
        return None
    contact = scene.wall_contacts.get(key)
    if contact is None:
        contact = scene.wall_contacts[key] = ContactState(key)
    T = scene.temperature if p.temperature is None else p.temperature
    c_loads = update_contact(contact, kin, scene.params_at(T), scene.material.friction, scene.dt)
    return assemble_pair(c_loads, None, kin.n, kin.un_dot, p.radius, 0.0)


def _evaluate_all(scene: Scene, pairs: list) -> list[PairResult]:
    if scene.threads <= 1 or len(pairs) < 2 * scene.threads:
        return [evaluate_pair(scene, pair) for pair in pairs]
    if scene._pool is None or scene._pool._max_workers != scene.threads:
        scene._pool = ThreadPoolExecutor(max_workers=scene.threads)
    size = -(-len(pairs) // scene.threads)
    chunks = [pairs[k:k + size] for k in range(0, len(pairs), size)]
    parts = scene._pool.map(lambda chunk: [evaluate_pair(scene, pr) for pr in chunk], chunks)
    return [result for part in parts for result in part]


def _check(vec, what: str, scene: Scene) -> None:
    if not math.isfinite(float(vec @ vec)):
        raise NumericalError(f"non-finite {what} at t={scene.time:.6g} s (step {scene.step_count})")


def step(scene: Scene) -> Scene:
    """Advance the scene by one time step (in place)."""
    dt = scene.dt
    if not scene._warned_dt and dt > critical_dt(scene):
        warnings.warn(f"dt={dt:.3g} s exceeds the stability estimate "
                      f"{critical_dt(scene):.3g} s", RuntimeWarning, stacklevel=2)
        scene._warned_dt = True
    for p in scene.particles:
        if p.fixed:
            p.position = p.position + p.velocity * dt
        else:
            gear_predict(p, dt)

    n = len(scene.particles)
    forces = np.zeros((n, 3))
    torques = np.zeros((n, 3))
    pairs = neighbor_search(scene)
    results = _evaluate_all(scene, pairs)
    for res in results:
        pair = res.pair
        if res.contact is None:
            scene.contacts.pop(pair, None)
            scene.blocked.discard(pair)
        else:
            scene.contacts[pair] = res.contact
        if res.broke:
            del scene.bonds[pair]
            if res.contact is not None:
                scene.blocked.add(pair)
        elif res.bond is not None:
            scene.bonds[pair] = res.bond
        if res.loads is None:
            continue
        i, j = pair
        f = res.loads.force_i
        if not math.isfinite(float(f @ f) + float(res.loads.torque_i @ res.loads.torque_i)
                             + float(res.loads.torque_j @ res.loads.torque_j)):
            raise NumericalError(f"non-finite force on pair {pair} at t={scene.time:.6g} s")
        forces[i] += f
        forces[j] -= f
        torques[i] += res.loads.torque_i
        torques[j] += res.loads.torque_j
    # contacts that dropped out of the candidate list have separated
    listed = set(pairs)
    for pair in [pr for pr in scene.contacts if pr not in listed]:
        del scene.contacts[pair]
        scene.blocked.discard(pair)

    for i in range(n):
        for k in range(len(scene.walls)):
            loads = _evaluate_wall(scene, i, k)
            if loads is None:
                continue
            if not math.isfinite(float(loads.force_i @ loads.force_i)):
                raise NumericalError(f"non-finite force between particle {i} and wall {k} "
                                     f"at t={scene.time:.6g} s")
            forces[i] += loads.force_i
            torques[i] += loads.torque_i

    for p in scene.particles:
        if p.fixed:
            update_orientation(p, dt)
            continue
        total = forces[p.id] + p.external_force
        gear_correct(p, total, scene.gravity, dt, torques[p.id])
        update_orientation(p, dt)
        _check(p.position, f"state of particle {p.id}", scene)
    scene.time += dt
    scene.step_count += 1
    return scene


def run(scene: Scene, duration: float, callback=None, every: int = 1) -> Scene:
    steps = int(round(duration / scene.dt))
    for k in range(steps):
        step(scene)
        if callback is not None and (k + 1) % every == 0:
            callback(scene)
    return scene


def kinetic_energy(scene: Scene) -> float:
    total = 0.0
    for p in scene.particles:
        total += 0.5 * p.mass * float(p.velocity @ p.velocity)
        total += 0.5 * p.inertia * float(p.angular_velocity @ p.angular_velocity)
    return total


def linear_momentum(scene: Scene) -> np.ndarray:
    return sum((p.mass * p.velocity for p in scene.particles), np.zeros(3))
