"""Verification scenarios, time-series output and snapshots.

Each scenario builds a small scene, runs it and returns the sampled channels
plus the headline numbers (fracture force, restitution, creep error).
Scenarios are deterministic: the same inputs give the same bits.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .bonds import Bond, FractureConfig, create_bond
from .contact import ContactState, FrictionConfig
from .dynamics import (
    Material,
    Particle,
    Scene,
    Wall,
    critical_dt,
    kinetic_energy,
    linear_momentum,
    sphere,
    step,
)
from .errors import ConfigError, NumericalError, ScenarioError
from .rheology import BurgersParams, BurgersState, creep_response

SNAPSHOT_VERSION = 1
SINTERING_RADIUS = 3e-3
BOUNCE_RADIUS = 1e-3
CREEP_RADIUS = 5e-3
# the pair starts from rest, so the first few oscillation periods are inertial
CREEP_SETTLE = 0.02


@dataclass
class TimeSeriesRecord:
    time: float
    channels: dict[str, float]


@dataclass
class ScenarioResult:
    name: str
    records: list[TimeSeriesRecord] = field(default_factory=list)
    summary: dict[str, float] = field(default_factory=dict)
    scene: Scene | None = None


Monitor = Callable[[Scene], None]


def _material(params: BurgersParams, fracture: FractureConfig | None,
              friction: FrictionConfig | None) -> Material:
    return Material(params, fracture or FractureConfig(modulus_scale=1e6),
                    friction or FrictionConfig())


def _advance(scene: Scene, steps: int, monitor: Monitor | None, sample=None, every: int = 1,
             stop=None) -> bool:
    """Step ``steps`` times; returns True if ``stop`` fired first."""
    for k in range(steps):
        step(scene)
        if monitor is not None:
            monitor(scene)
        if sample is not None and scene.step_count % every == 0:
            sample(scene)
        if stop is not None and stop(scene):
            return True
    return False


# ----------------------------------------------------------------------------
# sintering


def _pair_channels(scene: Scene, pair=(0, 1)) -> dict[str, float]:
    a, b = scene.particles[pair[0]], scene.particles[pair[1]]
    contact = scene.contacts.get(pair)
    bond = scene.bonds.get(pair)
    gap = float(np.linalg.norm(b.position - a.position)) - a.radius - b.radius
    return {
        "overlap_m": -gap,
        "contact_force_N": contact.f_n if contact is not None else 0.0,
        "bond_force_N": bond.stored_normal if bond is not None else 0.0,
        "bond_area_m2": bond.A_b if bond is not None else 0.0,
        "kinetic_energy_J": kinetic_energy(scene),
    }


def run_two_particle_sintering(params: BurgersParams, load: float, duration: float,
                               pull_rate: float = 1e-3, *, radius: float = SINTERING_RADIUS,
                               dt: float = 1e-5, pull_dt: float | None = None,
                               fracture: FractureConfig | None = None,
                               friction: FrictionConfig | None = None, every: int = 100,
                               threads: int = 1, monitor: Monitor | None = None) -> ScenarioResult:
    """Press two spheres together, then pull them apart until the bond fails.

    One sphere is held fixed, the other is pushed by ``load`` for ``duration``
    and then moved away kinematically at ``pull_rate``.  ``pull_dt`` defaults
    to a step that resolves the pull in about 2000 steps; the final tensile
    stage is refined further when it is short.  ``summary['f_frac']``
    is the total tensile force at the moment the bond failed.
    """
    if not load > 0:
        raise ScenarioError("no bond formed: the sintering load must be positive")
    if not (duration > 0 and pull_rate > 0):
        raise ConfigError("duration and pull_rate must be positive")
    a = sphere(0, radius, fixed=True)
    b = sphere(1, radius, [2 * radius, 0.0, 0.0], external_force=[-load, 0.0, 0.0])
    scene = Scene([a, b], _material(params, fracture, friction), dt=dt, gravity=[0, 0, 0],
                  threads=threads)
    result = ScenarioResult("two_particle_sintering", scene=scene)

    def sample(sc):
        result.records.append(TimeSeriesRecord(sc.time, _pair_channels(sc)))

    _advance(scene, max(1, int(round(duration / dt))), monitor, sample, every)
    bond = scene.bonds.get((0, 1))
    if bond is None:
        raise ScenarioError(f"no bond formed after {duration} s under {load} N")
    result.summary.update(bond_area_m2=bond.A_b, indentation_m=bond.indentation,
                          tensile_capacity_N=bond.tensile_capacity)
    if bond.E <= bond.tau_n:
        # with l_b the current length the beam force tends to E * A_b as the
        # pair separates, so such a neck can never reach its strength
        raise ScenarioError(f"bond too shallow to fail in tension: beam modulus "
                            f"{bond.E:.3g} Pa <= strength {bond.tau_n:.3g} Pa "
                            f"(indentation {bond.indentation:.3g} m)")

    b.fixed = True
    b.external_force[:] = 0.0
    b.velocity[:] = (pull_rate, 0.0, 0.0)
    b.angular_velocity[:] = 0.0
    # pull distance to failure if the beam were purely elastic
    stiffness = bond.E * bond.A_b / bond.l_b
    travel = bond.indentation + bond.tensile_capacity / stiffness
    if pull_dt is None:
        # both spheres are kinematic now, so dt only sets how finely the
        # approach to failure is resolved: aim for ~2000 steps
        pull_dt = min(travel / (pull_rate * 2000), 1e-2)
    scene.dt = pull_dt
    limit = int(math.ceil(10 * max(travel, 2 * radius) / (pull_rate * pull_dt)))
    # compression unloads first; refine once the bond starts to carry tension
    _advance(scene, limit, monitor, sample, every,
             stop=lambda sc: (0, 1) not in sc.bonds or bond.elongation > 0.0)
    # the tensile stage is short for deep necks (the beam saturates at E*A_b),
    # so it gets its own ~2000 steps
    stretch = 2 * radius * bond.tau_n / (bond.E - bond.tau_n)
    scene.dt = min(pull_dt, stretch / (pull_rate * 2000))
    broke = (0, 1) not in scene.bonds or _advance(
        scene, int(math.ceil(10 * stretch / (pull_rate * scene.dt))), monitor, sample, every,
        stop=lambda sc: (0, 1) not in sc.bonds)
    if not broke:
        raise ScenarioError("bond did not fail during the pull")
    result.summary.update(f_frac=bond.failure_load, failure_time_s=scene.time,
                          failure_mode=bond.failure_mode)
    return result


def sintering_oracle(params: BurgersParams, load: float, duration: float, tau_n: float,
                     r_ij: float) -> float:
    """Fracture force of the analytic chain: creep indentation -> neck area -> strength."""
    d = creep_response(params, [(0.0, load)], duration)
    return tau_n * math.pi * r_ij * d + params.f0_b


def run_sintering_vs_load(params: BurgersParams, loads, duration: float = 0.25,
                          **kwargs) -> ScenarioResult:
    """Fracture force for each load after a fixed sintering time."""
    result = ScenarioResult("sintering_vs_load")
    pairs = []
    for load in loads:
        f = run_two_particle_sintering(params, load, duration, **kwargs).summary["f_frac"]
        pairs.append((float(load), f))
        result.records.append(TimeSeriesRecord(float(load), {"f_frac_N": f}))
    result.summary["pairs"] = pairs
    return result


def run_sintering_vs_time(params: BurgersParams, load: float, durations,
                          **kwargs) -> ScenarioResult:
    """Fracture force for each sintering time at a fixed load."""
    result = ScenarioResult("sintering_vs_time")
    pairs = []
    for duration in durations:
        f = run_two_particle_sintering(params, load, duration, **kwargs).summary["f_frac"]
        pairs.append((float(duration), f))
        result.records.append(TimeSeriesRecord(float(duration), {"f_frac_N": f}))
    result.summary["pairs"] = pairs
    return result


# ----------------------------------------------------------------------------
# bouncing


def run_bouncing_particle(params: BurgersParams, drop_height: float = 0.01, *,
                          radius: float = BOUNCE_RADIUS, dt: float | None = None,
                          friction: FrictionConfig | None = None, every: int = 10,
                          monitor: Monitor | None = None) -> ScenarioResult:
    """Drop a sphere on a wall of the same ice; restitution from the velocities.

    The sphere starts just above the wall with the free-fall speed from
    ``drop_height``.  Restitution is the rebound speed at the first separation
    divided by the speed at first contact.  Sintering is off so the contact
    cannot stick.
    """
    if not drop_height > 0:
        raise ConfigError("drop_height must be positive")
    v0 = math.sqrt(2.0 * 9.81 * drop_height)
    p = sphere(0, radius, [0.0, 0.0, radius * 1.0001], velocity=[0.0, 0.0, -v0])
    scene = Scene([p], _material(params, None, friction), dt=1.0,
                  walls=[Wall([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])], sintering=False)
    scene.dt = dt if dt is not None else 0.2 * critical_dt(scene)
    result = ScenarioResult("bouncing_particle", scene=scene)
    state = {"v_in": None}

    def sample(sc):
        result.records.append(TimeSeriesRecord(sc.time, {
            "height_m": float(p.position[2]), "velocity_mps": float(p.velocity[2]),
            "in_contact": float(bool(sc.wall_contacts)), "kinetic_energy_J": kinetic_energy(sc)}))

    def stop(sc):
        touching = bool(sc.wall_contacts)
        if touching and state["v_in"] is None:
            state["v_in"] = -float(p.velocity[2])
        return state["v_in"] is not None and not touching

    # contact lasts a fraction of a millisecond; 1 s of flight is a safe cap
    limit = int(math.ceil(1.0 / scene.dt))
    if not _advance(scene, limit, monitor, sample, every, stop):
        raise ScenarioError("the particle did not rebound")
    sample(scene)
    result.summary.update(restitution=float(p.velocity[2]) / state["v_in"],
                          impact_speed_mps=state["v_in"], rebound_speed_mps=float(p.velocity[2]))
    return result


# ----------------------------------------------------------------------------
# creep


def creep_schedule(f0: float, duration: float, unload_at: float | None, ramp: float,
                   hold_fraction: float):
    """Load knots of the creep test: step to ``f0``, optional ramp down to a holding load."""
    if unload_at is None or unload_at >= duration:
        return [(0.0, f0)]
    hold = hold_fraction * f0
    return [(0.0, f0), (unload_at, f0), (unload_at + ramp, hold)]


def run_uniaxial_creep(params: BurgersParams, f0: float, duration: float, *,
                       radius: float = CREEP_RADIUS, dt: float = 1e-5,
                       unload_at: float | None = None, unload_ramp: float = 0.02,
                       hold_fraction: float = 1e-3, every: int = 100,
                       monitor: Monitor | None = None) -> ScenarioResult:
    """Two-sphere column under a constant load, compared with the creep law.

    Unloading ramps the force down to ``hold_fraction * f0`` over
    ``unload_ramp`` seconds; a sudden release would launch the free sphere.
    The small holding load keeps the pair in contact during recovery; it must
    stay below k_d times the delayed displacement or its own creep hides the
    recovery.
    ``summary['max_rel_error']`` compares the overlap with the analytic
    response outside the inertial windows after loading and during the ramp.
    """
    if f0 < 0 or not duration > 0:
        raise ConfigError("f0 must be non-negative and duration positive")
    knots = creep_schedule(f0, duration, unload_at, unload_ramp, hold_fraction)
    times = [k[0] for k in knots]
    values = [k[1] for k in knots]
    a = sphere(0, radius, fixed=True)
    b = sphere(1, radius, [2 * radius, 0.0, 0.0], external_force=[-f0, 0.0, 0.0])
    scene = Scene([a, b], _material(params, None, None), dt=dt, gravity=[0, 0, 0],
                  sintering=False)
    result = ScenarioResult("uniaxial_creep", scene=scene)

    def sample(sc):
        overlap = 2 * radius - float(b.position[0] - a.position[0])
        ref = creep_response(params, knots, sc.time) if f0 > 0 else 0.0
        result.records.append(TimeSeriesRecord(sc.time, {
            "overlap_m": overlap, "reference_m": ref,
            "load_N": float(-b.external_force[0])}))

    def drive(sc):
        b.external_force[0] = -float(np.interp(sc.time, times, values))
        if monitor is not None:
            monitor(sc)

    _advance(scene, int(round(duration / dt)), drive, sample, every)
    if f0 > 0:
        quiet = [r for r in result.records if r.time >= CREEP_SETTLE and not (
            unload_at is not None and unload_at <= r.time < unload_at + unload_ramp + CREEP_SETTLE)]
        errors = [abs(r.channels["overlap_m"] / r.channels["reference_m"] - 1) for r in quiet]
        result.summary["max_rel_error"] = max(errors) if errors else math.nan
    result.summary["final_overlap_m"] = result.records[-1].channels["overlap_m"]
    return result


# ----------------------------------------------------------------------------
# time series


def write_timeseries(records: list[TimeSeriesRecord], path) -> None:
    """Delimited text with a ``time_s`` column followed by the channels."""
    if not records:
        raise ValueError("no records to write")
    names = list(records[0].channels)
    last = -math.inf
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", *names])
        for rec in records:
            if not rec.time > last:
                raise ValueError(f"time must increase strictly, got {rec.time} after {last}")
            last = rec.time
            row = [rec.time] + [rec.channels[n] for n in names]
            if not all(math.isfinite(v) for v in row):
                raise NumericalError(f"non-finite channel at t={rec.time}")
            writer.writerow([repr(float(v)) for v in row])


def read_timeseries(path) -> list[TimeSeriesRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return [TimeSeriesRecord(float(row[0]), {n: float(v) for n, v in zip(header[1:], row[1:])})
                for row in reader]


# ----------------------------------------------------------------------------
# snapshots
#
# Every float is written with repr, which round-trips exactly, and objects are
# rebuilt without running their constructors' normalisation, so a restarted
# run continues bit for bit.

_TYPES = {cls.__name__: cls for cls in (Particle, Wall, ContactState, BurgersState, Bond,
                                        BurgersParams, FractureConfig, FrictionConfig, Material)}


def _encode(obj):
    if is_dataclass(obj):
        body = {f.name: _encode(getattr(obj, f.name)) for f in fields(obj)}
        return {"__type__": type(obj).__name__, **body}
    if isinstance(obj, np.ndarray):
        return {"__array__": [_encode(x) for x in obj.tolist()]}
    if isinstance(obj, tuple):
        return {"__tuple__": [_encode(x) for x in obj]}
    if isinstance(obj, (list,)):
        return [_encode(x) for x in obj]
    if isinstance(obj, (bool, str)) or obj is None:
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    raise TypeError(f"cannot snapshot {type(obj).__name__}")


def _decode(data):
    if isinstance(data, list):
        return [_decode(x) for x in data]
    if not isinstance(data, dict):
        return data
    if "__array__" in data:
        return np.array(data["__array__"], dtype=float)
    if "__tuple__" in data:
        return tuple(_decode(x) for x in data["__tuple__"])
    cls = _TYPES[data["__type__"]]
    obj = object.__new__(cls)
    for key, value in data.items():
        if key != "__type__":
            object.__setattr__(obj, key, _decode(value))
    return obj


def snapshot_dict(scene: Scene) -> dict:
    return {
        "version": SNAPSHOT_VERSION,
        "time": scene.time,
        "step_count": scene.step_count,
        "dt": scene.dt,
        "gravity": _encode(scene.gravity),
        "temperature": scene.temperature,
        "sintering": scene.sintering,
        "skin": scene.skin,
        "threads": scene.threads,
        "material": _encode(scene.material),
        "particles": _encode(scene.particles),
        "walls": _encode(scene.walls),
        "contacts": [_encode(c) for c in scene.contacts.values()],
        "wall_contacts": [_encode(c) for c in scene.wall_contacts.values()],
        "bonds": [_encode(b) for b in scene.bonds.values()],
        "blocked": [list(p) for p in scene.blocked],
    }


def write_snapshot(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(snapshot_dict(scene)))


def scene_from_snapshot(data: dict) -> Scene:
    if data.get("version") != SNAPSHOT_VERSION:
        raise ConfigError(f"unsupported snapshot version {data.get('version')!r}")
    scene = Scene(_decode(data["particles"]), _decode(data["material"]), dt=data["dt"],
                  gravity=_decode(data["gravity"]), time=data["time"],
                  temperature=data["temperature"], walls=_decode(data["walls"]),
                  sintering=data["sintering"], skin=data["skin"], threads=data["threads"],
                  step_count=data["step_count"])
    for c in data["contacts"]:
        c = _decode(c)
        scene.contacts[c.pair] = c
    for c in data["wall_contacts"]:
        c = _decode(c)
        scene.wall_contacts[c.pair] = c
    for b in data["bonds"]:
        b = _decode(b)
        scene.bonds[b.pair] = b
    scene.blocked = {tuple(p) for p in data["blocked"]}
    return scene


def read_snapshot(path) -> Scene:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
    try:
        return scene_from_snapshot(data)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed snapshot ({exc})") from None


# ----------------------------------------------------------------------------
# scene construction from configs


def random_packing(count: int, radius_range, lower, upper, seed: int,
                   max_tries: int = 1000) -> list[tuple[float, np.ndarray]]:
    """Random non-overlapping spheres inside a box (radius, centre)."""
    rng = np.random.default_rng(seed)
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    placed: list[tuple[float, np.ndarray]] = []
    for k in range(count):
        r = float(rng.uniform(*radius_range))
        for _ in range(max_tries):
            x = rng.uniform(lower + r, upper - r)
            if all(np.linalg.norm(x - y) >= r + s for s, y in placed):
                placed.append((r, x))
                break
        else:
            raise ConfigError(f"could not place particle {k} without overlap; enlarge the box")
    return placed


def build_scene(config) -> Scene:
    """Scene described by a custom config (explicit or random particles, walls, bonds)."""
    from .config import fracture_config, friction_config, params_for

    if config.restart:
        path = Path(config.restart)
        if not path.is_absolute():
            path = config._base_dir / path
        return read_snapshot(path)
    params = params_for(config)
    material = Material(params, fracture_config(config), friction_config(config))
    particles = []
    for k, p in enumerate(config.particles):
        particles.append(sphere(k, p.radius, p.position, density=p.density,
                                velocity=p.velocity, angular_velocity=p.angular_velocity,
                                fixed=p.fixed, external_force=p.external_force,
                                temperature=p.temperature))
    if config.random_particles is not None:
        rp = config.random_particles
        for r, x in random_packing(rp.count, rp.radius, rp.lower, rp.upper, config.seed):
            particles.append(sphere(len(particles), r, x))
    walls = [Wall(w.point, w.normal) for w in config.walls]
    dt = config.dt
    scene = Scene(particles, material, dt=dt or 1.0, gravity=config.gravity,
                  temperature=params.T_ref, walls=walls, sintering=config.sintering,
                  threads=config.threads)
    if dt is None:
        scene.dt = 0.2 * critical_dt(scene) if math.isfinite(critical_dt(scene)) else 1e-5
    for b in config.bonds:
        i, j = sorted(b.pair)
        p_i, p_j = particles[i], particles[j]
        delta = p_j.position - p_i.position
        distance = float(np.linalg.norm(delta))
        r_ij = p_i.radius * p_j.radius / (p_i.radius + p_j.radius)
        scene.bonds[(i, j)] = create_bond((i, j), b.indentation, r_ij, 0.0, params,
                                          material.fracture, l_b=distance,
                                          normal=delta / distance)
    return scene


def load_scene(path) -> Scene:
    from .config import load_config

    config = load_config(path)
    if config.scenario != "custom":
        raise ConfigError(f"{path}: scenario '{config.scenario}' builds its own scene; "
                          f"use a custom scenario to describe particles")
    return build_scene(config)


def scene_channels(scene: Scene) -> dict[str, float]:
    p = linear_momentum(scene)
    return {"kinetic_energy_J": kinetic_energy(scene), "momentum_x": float(p[0]),
            "momentum_y": float(p[1]), "momentum_z": float(p[2]),
            "contacts": float(len(scene.contacts) + len(scene.wall_contacts)),
            "bonds": float(len(scene.bonds))}


def run_custom(scene: Scene, duration: float, every: int = 100,
               monitor: Monitor | None = None) -> ScenarioResult:
    result = ScenarioResult("custom", scene=scene)

    def sample(sc):
        result.records.append(TimeSeriesRecord(sc.time, scene_channels(sc)))

    _advance(scene, int(round(duration / scene.dt)), monitor, sample, every)
    result.summary.update(scene_channels(scene), steps=scene.step_count)
    return result
