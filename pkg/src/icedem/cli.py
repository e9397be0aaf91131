"""Command-line entry point: ``icedem run | calibrate | check | version``.

Exit codes: 0 success, 1 configuration or input error, 2 numerical or
scenario failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path


from . import __version__
from .calibration import (
    FitResult,
    estimate_f0,
    fit_burgers_dls,
    fit_temperature_shifts,
    read_dataset,
    sintering_to_indentation,
)
from .config import (
    ScenarioConfig,
    fracture_config,
    friction_config,
    load_config,
    params_for,
    read_params_file,
    write_params_file,
)
from .errors import ConfigError, FitError, NumericalError, ScenarioError
from .harness import (
    CREEP_RADIUS,
    SINTERING_RADIUS,
    BOUNCE_RADIUS,
    ScenarioResult,
    TimeSeriesRecord,
    build_scene,
    run_bouncing_particle,
    run_custom,
    run_sintering_vs_load,
    run_sintering_vs_time,
    run_two_particle_sintering,
    run_uniaxial_creep,
    write_snapshot,
    write_timeseries,
)
from .materials import KELVIN, TABLE1, table1_params
from .rheology import REFERENCE_TEMPERATURE, creep_displacement

log = logging.getLogger("icedem")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def _snapshotter(out: Path, every: int, label: str):
    if not every:
        return None

    def monitor(scene):
        if scene.step_count % every == 0:
            write_snapshot(scene, out / f"snapshot_{label}{scene.step_count:09d}.json")

    return monitor


def run_config(config: ScenarioConfig, out: Path, snapshot_every: int = 0) -> ScenarioResult:
    """Run the scenario described by ``config`` and write its outputs to ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    sched = config.schedule
    every = config.output.every
    params = params_for(config)
    name = config.scenario
    if name == "two_particle_sintering":
        kw = dict(radius=config.geometry.radius or SINTERING_RADIUS, dt=config.dt or 1e-5,
                  pull_rate=sched.pull_rate, pull_dt=sched.pull_dt, fracture=fracture_config(config),
                  friction=friction_config(config), every=every, threads=config.threads)
        if sched.durations:
            result = run_sintering_vs_time(params, sched.load, sched.durations, **kw)
        else:
            kw["monitor"] = _snapshotter(out, snapshot_every, "")
            result = run_two_particle_sintering(params, sched.load, sched.duration, **kw)
    elif name == "sintering_vs_load":
        result = run_sintering_vs_load(
            params, sched.loads, sched.duration, radius=config.geometry.radius or SINTERING_RADIUS,
            dt=config.dt or 1e-5, pull_rate=sched.pull_rate, pull_dt=sched.pull_dt,
            fracture=fracture_config(config),
            friction=friction_config(config), every=every, threads=config.threads)
        loads, forces = zip(*result.summary["pairs"])
        if len(set(loads)) > 1:
            fit = estimate_f0(loads, forces)
            result.summary.update(slope=fit.slope, intercept=fit.intercept,
                                  r_squared=fit.r_squared)
    elif name == "bouncing_particle":
        radius = config.geometry.radius or BOUNCE_RADIUS
        temps = sched.temperatures or [params.T_ref]
        result = ScenarioResult("bouncing_particle")
        for T in temps:
            run = run_bouncing_particle(params_for(config, T), sched.drop_height, radius=radius,
                                        dt=config.dt, friction=friction_config(config),
                                        every=every)
            e = run.summary["restitution"]
            result.records.append(TimeSeriesRecord(T, {"restitution": e}))
            result.summary[f"restitution_{T:g}K"] = e
            if len(temps) == 1:
                result = run
    elif name == "uniaxial_creep":
        result = run_uniaxial_creep(params, sched.load, sched.duration,
                                    radius=config.geometry.radius or CREEP_RADIUS,
                                    dt=config.dt or 1e-5, unload_at=sched.unload_at,
                                    unload_ramp=sched.unload_ramp,
                                    hold_fraction=sched.hold_fraction, every=every,
                                    monitor=_snapshotter(out, snapshot_every, ""))
    else:
        scene = build_scene(config)
        result = run_custom(scene, sched.duration, every,
                            monitor=_snapshotter(out, snapshot_every, ""))
        write_snapshot(scene, out / "final_snapshot.json")
    if result.records:
        write_timeseries(result.records, out / "timeseries.csv")
    (out / "summary.json").write_text(json.dumps(result.summary, indent=2, default=str))
    return result


def _cmd_run(args) -> int:
    config = load_config(args.config)
    updates = {}
    if args.dt is not None:
        updates["dt"] = args.dt
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.threads is not None:
        updates["threads"] = args.threads
    if updates:
        base_dir = config._base_dir
        config = ScenarioConfig.model_validate({**config.model_dump(), **updates})
        config._base_dir = base_dir
    out = Path(args.output_dir)
    result = run_config(config, out, args.snapshot_every or config.output.snapshot_every)
    for key, value in result.summary.items():
        if key != "pairs":
            print(f"{key}: {value}")
    print(f"outputs written to {out}")
    return EXIT_OK


def _cmd_check(args) -> int:
    config = load_config(args.config)
    params_for(config)
    if config.scenario == "custom":
        scene = build_scene(config)
        print(f"{args.config}: ok ({len(scene.particles)} particles, {len(scene.walls)} walls, "
              f"{len(scene.bonds)} bonds, dt={scene.dt:.3g} s)")
    else:
        print(f"{args.config}: ok (scenario {config.scenario})")
    return EXIT_OK


def _nearest_row(T: float):
    return table1_params(min(TABLE1, key=lambda c: abs(c + KELVIN - T)))


def _write_report(path: Path, t, d, fit: FitResult, load: float) -> None:
    model = creep_displacement(fit.params, load, t)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "indentation_m", "model_m", "residual_m"])
        for row in zip(t, d, model, model - d):
            writer.writerow([repr(float(v)) for v in row])


def _cmd_calibrate(args) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    datasets = [read_dataset(p) for p in args.datasets]
    init_file = read_params_file(args.init) if args.init else None
    by_temp: dict[float, list] = {}
    for data in datasets:
        by_temp.setdefault(round(data.temperature, 6), []).append(data)
    fits = []
    for T, group in sorted(by_temp.items()):
        f0_b = None
        for data in (d for d in group if d.kind == "load"):
            line = estimate_f0(data.x, data.f_frac)
            f0_b = line.intercept
            print(f"T={T} K: f0_b={f0_b:.6g} N from {data.source} (R^2={line.r_squared:.4f})")
        for data in (d for d in group if d.kind == "time"):
            init = init_file or _nearest_row(T)
            f0 = f0_b if f0_b is not None else None
            fit = fit_burgers_dls(data, init, fixed=tuple(args.fix), f0_b=f0)
            p = fit.params
            stem = f"params_{T:g}K"
            write_params_file(p, out / f"{stem}.yaml", {"fit": {
                "source": data.source, "converged": bool(fit.converged),
                "iterations": int(fit.iterations), "residual_norm": float(fit.residual_norm)}})
            d = sintering_to_indentation(data.f_frac, p.f0_b, data.tau_n, data.R_eq)
            _write_report(out / f"report_{T:g}K.csv", data.x, d, fit, data.load)
            print(f"T={T} K: k_i={p.k_i:.6g} k_d={p.k_d:.6g} c_i={p.c_i:.6g} c_d={p.c_d:.6g} "
                  f"f0_b={p.f0_b:.6g} converged={fit.converged} iterations={fit.iterations}")
            if not fit.converged:
                log.warning("fit at %s K did not converge", T)
            fits.append((T, p))
    if len(fits) >= 3 and any(abs(T - REFERENCE_TEMPERATURE) < 1e-6 for T, _ in fits):
        shifts = fit_temperature_shifts(fits)
        body = {name: {"C1": float(r.params[0]), "C2": float(r.params[1]),
                       "converged": bool(r.converged)} for name, r in shifts.items()}
        (out / "wlf.json").write_text(json.dumps(body, indent=2))
        for name, r in shifts.items():
            print(f"WLF {name}: C1={r.params[0]:.6g} C2={r.params[1]:.6g}")
    elif not fits:
        raise FitError("no time-series dataset to fit")
    return EXIT_OK


def _cmd_version(args) -> int:
    print(f"icedem {__version__}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icedem", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario config")
    run.add_argument("config")
    run.add_argument("--output-dir", default="output")
    run.add_argument("--dt", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("--snapshot-every", type=int, default=0, metavar="STEPS")
    run.set_defaults(func=_cmd_run)

    cal = sub.add_parser("calibrate", help="fit Burgers constants to sintering datasets")
    cal.add_argument("datasets", nargs="+")
    cal.add_argument("--output-dir", default="calibration")
    cal.add_argument("--init", help="parameter file used as the starting point")
    cal.add_argument("--fix", nargs="*", default=["k_i"], help="parameters held fixed")
    cal.set_defaults(func=_cmd_calibrate)

    check = sub.add_parser("check", help="validate a scene or scenario config")
    check.add_argument("config")
    check.set_defaults(func=_cmd_check)

    version = sub.add_parser("version", help="print the version")
    version.set_defaults(func=_cmd_version)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
