"""Fitting Burgers constants to fast-sintering measurements.

A fracture (sintering) force is converted to a neck indentation through the
bond strength, the indentation history under a constant load is fitted with
the creep law, and viscosities at several temperatures are fitted with WLF
shifts.  All fits use one damped least-squares engine.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, FitError
from .rheology import REFERENCE_TEMPERATURE, BurgersParams, creep_displacement

PARAM_NAMES = ("k_i", "k_d", "c_i", "c_d")


@dataclass
class SinteringDataset:
    """Fracture forces measured at one temperature.

    ``kind`` is ``"time"`` (x = sintering time in s under ``load``) or
    ``"load"`` (x = applied force in N after ``duration``).
    """

    temperature: float
    R_eq: float
    samples: list[tuple[float, float]]
    tau_n: float
    kind: str = "time"
    load: float | None = None
    duration: float | None = None
    f0_b: float | None = None
    source: str = ""

    def __post_init__(self):
        if not self.samples:
            raise ValueError("dataset has no samples")
        self.samples = [(float(x), float(f)) for x, f in self.samples]
        if self.kind not in ("time", "load"):
            raise ValueError(f"kind must be 'time' or 'load', got {self.kind!r}")
        if not (self.R_eq > 0 and self.tau_n > 0 and self.temperature > 0):
            raise ValueError("R_eq, tau_n and temperature must be positive")
        x = np.array([s[0] for s in self.samples], dtype=float)
        f = np.array([s[1] for s in self.samples], dtype=float)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(f))):
            raise ValueError("samples must be finite")
        if np.any(f < 0):
            raise ValueError("fracture forces must be non-negative")
        if self.kind == "time":
            if np.any(x <= 0):
                raise ValueError("sintering times must be strictly positive")
            if not (self.load is not None and self.load > 0):
                raise ValueError("a time series needs the applied load")

    @property
    def x(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples], dtype=float)

    @property
    def f_frac(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples], dtype=float)


@dataclass
class FitResult:
    params: object
    residual_norm: float
    iterations: int
    converged: bool
    gradient_norm: float = math.nan
    history: list[float] = field(default_factory=list)
    residuals: np.ndarray | None = None


def sintering_to_indentation(f_frac, f0_b: float, tau_n: float, R_eq: float):
    """Neck depth d = (f_frac - f0_b) / (pi * tau_n * R_eq)."""
    if not (tau_n > 0 and R_eq > 0):
        raise ValueError("tau_n and R_eq must be positive")
    excess = np.asarray(f_frac, dtype=float) - f0_b
    if np.any(excess < 0):
        raise ValueError("fracture force below the load-independent part f0_b")
    d = excess / (math.pi * tau_n * R_eq)
    return float(d) if np.ndim(d) == 0 else d


def indentation_to_force(d, f0_b: float, tau_n: float, R_eq: float):
    """Forward map: f_frac = tau_n * pi * R_eq * d + f0_b."""
    return tau_n * (math.pi * R_eq * np.asarray(d, dtype=float)) + f0_b


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


def estimate_f0(loads, f_frac) -> LinearFit:
    """Ordinary least-squares line through (load, f_frac); the intercept is f0_b."""
    x = np.asarray(loads, dtype=float)
    y = np.asarray(f_frac, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        raise FitError("need at least two distinct loads")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - A @ [slope, intercept]) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(float(slope), float(intercept), r2)


def damped_least_squares(residual: Callable, jacobian: Callable, x0, *, lam0: float = 1e-3,
                         max_iter: int = 500, rtol: float = 1e-10, gtol: float = 1e-12,
                         lam_max: float = 1e16) -> FitResult:
    """Levenberg-style minimisation of 0.5 * |r(x)|^2.

    Steps solve (J^T J + lam * diag(J^T J)) dx = -J^T r.  The damping starts
    at ``lam0``, is multiplied by 10 after a rejected step and divided by 10
    after an accepted one.  Accepted steps never increase the residual.
    Stops when the relative decrease of the squared residual drops below
    ``rtol`` or the gradient norm below ``gtol``.
    """
    x = np.array(x0, dtype=float)
    r = residual(x)
    cost = float(r @ r)
    history = [math.sqrt(cost)]
    lam = lam0
    grad_norm = math.inf
    for it in range(1, max_iter + 1):
        J = jacobian(x)
        g = J.T @ r
        grad_norm = float(np.linalg.norm(g))
        if grad_norm < gtol or cost == 0.0:
            return FitResult(x, math.sqrt(cost), it - 1, True, grad_norm, history, r)
        H = J.T @ J
        diag = np.diag(H).copy()
        diag[diag == 0] = 1.0
        while True:
            try:
                dx = np.linalg.solve(H + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                dx = None
            if dx is not None and np.all(np.isfinite(dx)):
                try:
                    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
                        r_new = residual(x + dx)
                    cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
                except (ValueError, ArithmeticError):
                    # the trial point left the admissible region
                    cost_new = math.inf
                if cost_new <= cost:
                    break
            lam *= 10.0
            if lam > lam_max:
                return FitResult(x, math.sqrt(cost), it, False, grad_norm, history, r)
        x = x + dx
        decrease = (cost - cost_new) / cost if cost > 0 else 0.0
        r, cost = r_new, cost_new
        history.append(math.sqrt(cost))
        lam = max(lam / 10.0, 1e-300)
        if decrease < rtol:
            J = jacobian(x)
            grad_norm = float(np.linalg.norm(J.T @ r))
            return FitResult(x, math.sqrt(cost), it, True, grad_norm, history, r)
    return FitResult(x, math.sqrt(cost), max_iter, False, grad_norm, history, r)


def creep_jacobian(params: BurgersParams, load: float, t, log: bool = False) -> np.ndarray:
    """Partial derivatives of the creep law w.r.t. (k_i, k_d, c_i, c_d).

    With ``log`` the derivatives are taken w.r.t. the logarithms of the
    parameters, which stays finite for extreme parameter values.
    """
    t = np.asarray(t, dtype=float)
    k_i, k_d, c_i, c_d = params.k_i, params.k_d, params.c_i, params.c_d
    decay = np.exp(-t * k_d / c_d)
    J = load * np.column_stack([
        np.full_like(t, -1.0 / k_i),
        np.expm1(-t * k_d / c_d) / k_d + t * decay / c_d,
        -t / c_i,
        -t * decay / c_d,
    ])
    if log:
        return J
    return J / np.array([k_i, k_d, c_i, c_d])


def fit_creep_curve(t, d, load: float, init: BurgersParams,
                    fixed: Sequence[str] = ("k_i",), **options) -> FitResult:
    """Fit the creep law d(t) under ``load`` to indentations ``d``.

    Free parameters are fitted in log space, which keeps them positive.
    Residuals are scaled by the largest indentation so tolerances are
    dimensionless.
    """
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    unknown = set(fixed) - set(PARAM_NAMES)
    if unknown:
        raise ValueError(f"unknown parameter(s) {sorted(unknown)}")
    free = [k for k, name in enumerate(PARAM_NAMES) if name not in fixed]
    if len(t) < len(free):
        raise FitError(f"{len(t)} points cannot determine {len(free)} parameters")
    if not load > 0:
        raise ValueError("load must be positive")
    base = np.log([getattr(init, name) for name in PARAM_NAMES])
    scale = 1.0 / float(np.max(np.abs(d))) if np.any(d) else 1.0

    def unpack(z):
        values = [float(getattr(init, name)) for name in PARAM_NAMES]
        for k, value in zip(free, np.exp(z)):
            values[k] = float(value)
        return BurgersParams(*values, f0_b=init.f0_b, T_ref=init.T_ref)

    def residual(z):
        return (creep_displacement(unpack(z), load, t) - d) * scale

    def jacobian(z):
        return creep_jacobian(unpack(z), load, t, log=True)[:, free] * scale

    result = damped_least_squares(residual, jacobian, base[free], **options)
    result.params = unpack(result.params)
    result.residuals = result.residuals / scale
    return result


def fit_burgers_dls(data: SinteringDataset, init: BurgersParams,
                    fixed: Sequence[str] = ("k_i",), f0_b: float | None = None,
                    **options) -> FitResult:
    """Burgers constants from a fracture-force time series.

    ``f0_b`` defaults to the dataset value, then to ``init.f0_b``.
    """
    if data.kind != "time":
        raise FitError("the creep fit needs a time series")
    if f0_b is None:
        f0_b = data.f0_b if data.f0_b is not None else init.f0_b
    d = sintering_to_indentation(data.f_frac, f0_b, data.tau_n, data.R_eq)
    result = fit_creep_curve(data.x, d, data.load, init, fixed, **options)
    p = result.params
    result.params = BurgersParams(p.k_i, p.k_d, p.c_i, p.c_d, f0_b=f0_b, T_ref=data.temperature)
    return result


def _wlf_residual(dT, log_shift, space):
    shift = np.exp(log_shift)

    def model(z):
        C1, C2 = z
        return -C1 * dT / (C2 + dT)

    def residual(z):
        if space == "log":
            return model(z) - log_shift
        return np.exp(model(z)) - shift

    def jacobian(z):
        C1, C2 = z
        denom = C2 + dT
        J = np.column_stack([-dT / denom, C1 * dT / denom ** 2])
        if space == "log":
            return J
        return J * np.exp(model(z))[:, None]

    return residual, jacobian


def fit_wlf(temperatures, values, T0: float = REFERENCE_TEMPERATURE, space: str = "linear",
            **options) -> FitResult:
    """(C1, C2) of ln(v(T) / v(T0)) = -C1 (T - T0) / (C2 + T - T0).

    One of ``temperatures`` must equal ``T0``.  The start point comes from
    the linearisation dT / ln a = -C2/C1 - dT/C1.  ``space`` picks where
    residuals are measured: on the shift factors a_T ("linear") or on ln a_T
    ("log").  The log form weights small shifts more heavily.
    """
    if space not in ("linear", "log"):
        raise ConfigError(f"space must be 'linear' or 'log', got {space!r}")
    T = np.asarray(temperatures, dtype=float)
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0):
        raise FitError("shift data must be positive")
    ref = np.isclose(T, T0, rtol=0, atol=1e-9)
    if ref.sum() != 1:
        raise FitError(f"exactly one row must sit at the reference temperature {T0} K")
    others = T[~ref]
    if len(np.unique(others)) < 2 or len(np.unique(others)) != len(others):
        raise FitError("need at least two distinct, non-repeated temperatures "
                       "besides the reference")
    dT = others - T0
    log_shift = np.log(v[~ref] / v[ref][0])
    if np.any(log_shift == 0):
        raise FitError("a non-reference temperature has no shift; the WLF form is singular")
    A = np.column_stack([np.ones_like(dT), dT])
    (alpha, beta), *_ = np.linalg.lstsq(A, dT / log_shift, rcond=None)
    if beta == 0:
        raise FitError("degenerate shift data")
    # alpha = -C2 / C1 and beta = -1 / C1
    x0 = np.array([-1.0 / beta, alpha / beta])
    residual, jacobian = _wlf_residual(dT, log_shift, space)
    return damped_least_squares(residual, jacobian, x0, **options)


def fit_temperature_shifts(fits: Sequence[tuple[float, BurgersParams]],
                           T0: float = REFERENCE_TEMPERATURE,
                           space: str = "linear") -> dict[str, FitResult]:
    """WLF constants for c_i, c_d and the relaxation time c_d / k_d."""
    if len(fits) < 3:
        raise FitError("need at least three temperatures")
    T = [t for t, _ in fits]
    channels = {
        "instantaneous": [p.c_i for _, p in fits],
        "delayed": [p.c_d for _, p in fits],
        "relaxation_time": [p.c_d / p.k_d for _, p in fits],
    }
    return {name: fit_wlf(T, values, T0, space) for name, values in channels.items()}


# ----------------------------------------------------------------------------
# dataset files


def default_creep_grid() -> np.ndarray:
    return np.unique(np.r_[np.geomspace(0.05, 50.0, 30), np.linspace(50.0, 1000.0, 70)])


def synthetic_creep(params: BurgersParams, load: float, t=None, noise: float = 0.0,
                    seed: int = 0):
    """Creep-law indentations on ``t`` with optional multiplicative noise.

    The default grid is logarithmic up to 50 s and linear up to 1000 s, so the
    delayed response and the steady creep slope are both well sampled.
    """
    t = default_creep_grid() if t is None else np.asarray(t, dtype=float)
    d = creep_displacement(params, load, t)
    if noise:
        d = d * (1.0 + noise * np.random.default_rng(seed).standard_normal(d.shape))
    return t, d


def read_dataset(path) -> SinteringDataset:
    """Read a delimited dataset with ``# key: value`` metadata lines.

    The header names the columns: ``time_s`` or ``load_N``, then
    ``fracture_force_N``.  Metadata keys: ``temperature_K``, ``R_eq_m``,
    ``tau_n_Pa`` (required), ``load_N`` (time series), ``duration_s``,
    ``f0_b_N``.
    """
    path = Path(path)
    meta: dict[str, tuple[str, int]] = {}
    rows: list[tuple[int, str]] = []
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, sep, value = stripped[1:].partition(":")
            if sep:
                meta[key.strip()] = (value.strip(), lineno)
            continue
        rows.append((lineno, line))
    if not rows:
        raise ConfigError(f"{path}: no header line")
    dialect = csv.Sniffer().sniff(rows[0][1], delimiters=",;\t ") if "," not in rows[0][1] \
        else csv.excel
    header_line, *data_lines = rows
    header = [h.strip() for h in next(csv.reader([header_line[1]], dialect))]
    if len(header) < 2 or header[1] != "fracture_force_N" or header[0] not in ("time_s", "load_N"):
        raise ConfigError(f"{path}:{header_line[0]}: header must be 'time_s,fracture_force_N' "
                          f"or 'load_N,fracture_force_N', got {','.join(header)}")
    samples = []
    for lineno, line in data_lines:
        cells = [c.strip() for c in next(csv.reader([line], dialect))]
        if len(cells) != len(header):
            raise ConfigError(f"{path}:{lineno}: expected {len(header)} fields, got {len(cells)}")
        values = []
        for name, cell in zip(header, cells):
            try:
                values.append(float(cell))
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: field '{name}' is not a number: {cell!r}") \
                    from None
        samples.append((values[0], values[1]))

    def number(key, required=True):
        if key not in meta:
            if required:
                raise ConfigError(f"{path}: missing metadata '# {key}: <value>'")
            return None
        value, lineno = meta[key]
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: metadata '{key}' is not a number: {value!r}") \
                from None

    kind = "time" if header[0] == "time_s" else "load"
    try:
        return SinteringDataset(
            temperature=number("temperature_K"), R_eq=number("R_eq_m"), samples=samples,
            tau_n=number("tau_n_Pa"), kind=kind, load=number("load_N", kind == "time"),
            duration=number("duration_s", False), f0_b=number("f0_b_N", False),
            source=str(path))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def write_dataset(dataset: SinteringDataset, path) -> None:
    path = Path(path)
    lines = [f"# temperature_K: {dataset.temperature!r}", f"# R_eq_m: {dataset.R_eq!r}",
             f"# tau_n_Pa: {dataset.tau_n!r}"]
    for key, value in (("load_N", dataset.load), ("duration_s", dataset.duration),
                       ("f0_b_N", dataset.f0_b)):
        if value is not None:
            lines.append(f"# {key}: {value!r}")
    lines.append(("time_s" if dataset.kind == "time" else "load_N") + ",fracture_force_N")
    lines += [f"{float(x)!r},{float(f)!r}" for x, f in dataset.samples]
    path.write_text("\n".join(lines) + "\n")
