"""Calibrated Burgers constants for ice at four temperatures.

Values are stored exactly as printed by the fast-sintering calibration and
interpreted in SI (N/m, N*s/m, N).
"""
from __future__ import annotations

from .rheology import BurgersParams, params_at_temperature

KELVIN = 273.15

# degC: (c_i, c_d, k_i, k_d, f0_b)
TABLE1 = {
    -1.0: (0.15385e3, 15.698, 9e3, 0.30783, 0.08411),
    -5.0: (0.39047e3, 43.230, 9e3, 0.53908, 0.06535),
    -12.0: (0.70373e3, 81.653, 9e3, 0.60423, 0.05),
    -23.0: (1.0444e3, 82.50, 9e3, 1.1561, 0.0298),
}


def table1_params(celsius: float) -> BurgersParams:
    """Calibrated row at ``celsius`` (must be one of -1, -5, -12, -23)."""
    try:
        c_i, c_d, k_i, k_d, f0_b = TABLE1[float(celsius)]
    except KeyError:
        raise KeyError(f"no calibrated row at {celsius} degC; "
                       f"available: {sorted(TABLE1)}") from None
    return BurgersParams(k_i=k_i, k_d=k_d, c_i=c_i, c_d=c_d, f0_b=f0_b,
                         T_ref=celsius + KELVIN)


def material_at(T: float, model: str = "table") -> BurgersParams:
    """Burgers constants at temperature ``T`` (K).

    ``table`` requires ``T`` to coincide with a calibrated row; ``wlf`` and
    ``arrhenius`` shift the -1 degC row.
    """
    if model == "table":
        return table1_params(round(T - KELVIN, 6))
    return params_at_temperature(table1_params(-1.0), T, model=model)
