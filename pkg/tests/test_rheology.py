import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icedem.materials import TABLE1, table1_params
from icedem.rheology import (
    BurgersParams,
    BurgersState,
    arrhenius_rate,
    burgers_step,
    complex_compliance,
    creep_displacement,
    creep_rate,
    creep_response,
    displacement_for_force,
    params_at_temperature,
    recovery_displacement,
    transverse_params,
    viscosity_at_temperature,
    wlf_shift,
)

ROWS = sorted(TABLE1)


def eq8(k_i, k_d, c_i, c_d, f0, t):
    """Scalar creep law, written out independently of the package."""
    return f0 * (1 / k_i + t / c_i + (1 / k_d) * (1 - math.exp(-t * k_d / c_d)))


def simulate_constant_force(params, f0, t_end, dt):
    state = BurgersState()
    n = int(round(t_end / dt))
    for _ in range(n):
        u = displacement_for_force(params, state, f0, dt)
        f, state = burgers_step(params, state, u, dt)
    return state.u_prev, f


params_st = st.builds(
    BurgersParams,
    k_i=st.floats(1e2, 1e5),
    k_d=st.floats(1e-2, 1e2),
    c_i=st.floats(1e1, 1e4),
    c_d=st.floats(1e0, 1e3),
)


def test_zero_displacement_gives_zero_force():
    f, state = burgers_step(table1_params(-1), BurgersState(), 0.0, 1e-5)
    assert f == 0.0
    assert state.u_d == 0.0


def test_held_step_displacement_relaxes_monotonically():
    params = table1_params(-1)
    state = BurgersState()
    dt = 1e-3
    forces = []
    for _ in range(2000):
        f, state = burgers_step(params, state, 1e-4, dt)
        forces.append(f)
    forces = np.array(forces)
    assert forces[0] > 0
    assert np.all(np.diff(forces) < 0)
    assert np.all(forces > 0)


@pytest.mark.parametrize("celsius", ROWS)
def test_constant_force_matches_creep_law(celsius):
    p = table1_params(celsius)
    u, f = simulate_constant_force(p, 0.05, 1.0, 1e-5)
    expected = eq8(p.k_i, p.k_d, p.c_i, p.c_d, 0.05, 1.0)
    assert f == pytest.approx(0.05, rel=1e-12)
    assert abs(u - expected) / expected < 5e-3


def test_creep_convergence_is_monotone_in_dt():
    p = table1_params(-5)
    expected = eq8(p.k_i, p.k_d, p.c_i, p.c_d, 0.1, 1.0)
    dts = [1e-3 / 2 ** k for k in range(7)]
    errors = [abs(simulate_constant_force(p, 0.1, 1.0, dt)[0] - expected) / expected
              for dt in dts]
    assert all(later < earlier for earlier, later in zip(errors, errors[1:]))


def test_burgers_step_rejects_bad_input():
    p = table1_params(-1)
    with pytest.raises(ValueError):
        burgers_step(p, BurgersState(), 1e-4, 0.0)
    with pytest.raises(ValueError):
        burgers_step(p, BurgersState(), float("nan"), 1e-5)


def test_params_validation():
    with pytest.raises(ValueError):
        BurgersParams(k_i=-1, k_d=1, c_i=1, c_d=1)
    with pytest.raises(ValueError):
        BurgersParams(k_i=1, k_d=1, c_i=1, c_d=1, f0_b=-0.1)


def test_creep_displacement_limits():
    p = table1_params(-12)
    assert creep_displacement(p, 0.05, 0.0) == pytest.approx(0.05 / p.k_i, rel=1e-15)
    late = creep_displacement(p, 0.05, np.array([1e5, 1e5 + 1.0]))
    assert late[1] - late[0] == pytest.approx(0.05 / p.c_i, rel=1e-6)
    with pytest.raises(ValueError):
        creep_displacement(p, 0.05, -1.0)


def test_creep_displacement_regression_anchor():
    # -12 degC row, 0.05 N, 0.25 s, evaluated term by term
    k_i, k_d, c_i, c_d = 9e3, 0.60423, 0.70373e3, 81.653
    anchor = 0.05 * (1 / k_i + 0.25 / c_i + (1 - math.exp(-0.25 * k_d / c_d)) / k_d)
    assert anchor == pytest.approx(1.7626e-4, rel=1e-4)
    assert creep_displacement(table1_params(-12), 0.05, 0.25) == pytest.approx(anchor, rel=1e-14)


def test_creep_rate_limits():
    p = table1_params(-5)
    assert creep_rate(p, 0.1, 1e6) == pytest.approx(0.1 / p.c_i, rel=1e-12)
    assert creep_rate(p, 0.1, 0.0) == pytest.approx(0.1 * (1 / p.c_i + 1 / p.c_d), rel=1e-14)


@pytest.mark.parametrize("celsius", ROWS)
def test_creep_rate_is_derivative(celsius):
    p = table1_params(celsius)
    h = 1e-6
    fd = (creep_displacement(p, 0.1, 0.1 + h) - creep_displacement(p, 0.1, 0.1 - h)) / (2 * h)
    assert creep_rate(p, 0.1, 0.1) == pytest.approx(fd, rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(params=params_st, t=st.floats(0.01, 10.0))
def test_creep_rate_derivative_property(params, t):
    h = 1e-6 * max(t, 1.0)
    fd = (creep_displacement(params, 1.0, t + h) - creep_displacement(params, 1.0, t - h)) / (2 * h)
    assert creep_rate(params, 1.0, t) == pytest.approx(fd, rel=1e-6)


def test_transverse_params():
    p = table1_params(-1)
    half = transverse_params(p, 0.0)
    assert (half.k_i, half.k_d, half.c_i, half.c_d) == (p.k_i / 2, p.k_d / 2, p.c_i / 2, p.c_d / 2)
    assert transverse_params(p, 0.3).k_i == pytest.approx(3461.538, rel=1e-6)
    twice = transverse_params(transverse_params(p, 0.5), 0.5)
    assert twice.c_d == pytest.approx(p.c_d / 9, rel=1e-15)
    assert twice.f0_b == p.f0_b and twice.T_ref == p.T_ref
    with pytest.raises(ValueError):
        transverse_params(p, 0.6)
    with pytest.raises(ValueError):
        transverse_params(p, -1.0)


@settings(max_examples=50, deadline=None)
@given(params=params_st, nu=st.floats(-0.99, 0.5))
def test_transverse_preserves_relaxation_rate(params, nu):
    assert transverse_params(params, nu).relaxation_rate == pytest.approx(params.relaxation_rate, rel=1e-14)


def rational_compliance(p, omega):
    """Compliance from the operator polynomials of the differential law."""
    k_i, k_d, c_i, c_d = p.k_i, p.k_d, p.c_i, p.c_d
    p1 = c_d / k_d + c_i * (1 / k_d + 1 / k_i)
    p2 = c_d * c_i / (k_d * k_i)
    q1 = c_i
    q2 = c_d * c_i / k_d
    s = 1j * omega
    return (1 + p1 * s + p2 * s ** 2) / (q1 * s + q2 * s ** 2)


def test_compliance_limits():
    p = table1_params(-1)
    assert complex_compliance(p, 1e9).g_storage == pytest.approx(1 / p.k_i, rel=1e-9)
    low = complex_compliance(p, 1e-6)
    assert low.g_loss == pytest.approx(1 / (1e-6 * p.c_i), rel=1e-3)
    with pytest.raises(ValueError):
        complex_compliance(p, 0.0)


def test_compliance_matches_rational_form_at_100_rad_s():
    p = table1_params(-5)
    g = rational_compliance(p, 100.0)
    cc = complex_compliance(p, 100.0)
    assert cc.g_storage == pytest.approx(g.real, rel=1e-12)
    assert cc.g_loss == pytest.approx(-g.imag, rel=1e-12)
    assert cc.g_mag == pytest.approx(abs(g), rel=1e-12)
    assert cc.phase == pytest.approx(-cmath.phase(g), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(params=params_st, omega=st.floats(1e-2, 1e5))
def test_compliance_property(params, omega):
    g = rational_compliance(params, omega)
    cc = complex_compliance(params, omega)
    scale = abs(g)
    assert abs(cc.g_storage - g.real) <= 1e-12 * scale
    assert abs(cc.g_loss + g.imag) <= 1e-12 * scale
    assert cc.g_mag ** 2 == pytest.approx(cc.g_storage ** 2 + cc.g_loss ** 2, rel=1e-14)
    assert math.tan(cc.phase) == pytest.approx(cc.g_loss / cc.g_storage, rel=1e-9)


def test_wlf_shift():
    assert wlf_shift(260.0, 260.0, 17.4, 51.6) == 1.0
    direct = math.exp(2.571 * -11 / (-6.154 - 11))
    assert wlf_shift(261.15, 272.15, -2.571, -6.154) == pytest.approx(direct, rel=1e-14)
    with pytest.raises(ValueError):
        wlf_shift(6.154, 0.0, -2.571, -6.154)


def test_wlf_monotone_for_instantaneous_fit():
    dT = np.linspace(-22, 0, 2001)
    shifts = np.array([wlf_shift(272.15 + d, 272.15, -2.586, -7.706) for d in dT])
    assert np.all(np.diff(shifts) < 0)


def test_viscosity_at_temperature():
    p = table1_params(-1)
    for which in ("instantaneous", "delayed", "relaxation_rate"):
        base = {"instantaneous": p.c_i, "delayed": p.c_d, "relaxation_rate": p.relaxation_rate}[which]
        assert viscosity_at_temperature(p, 272.15, which) == pytest.approx(base, rel=1e-15)
    scale = viscosity_at_temperature(p, 261.15, "instantaneous") / p.c_i
    assert scale == pytest.approx(0.70373e3 / 0.15385e3, rel=0.01)
    assert (viscosity_at_temperature(p, 250.15, "delayed")
            >= viscosity_at_temperature(p, 261.15, "delayed"))
    with pytest.raises(ValueError):
        viscosity_at_temperature(p, 280.0, "delayed")
    with pytest.raises(ValueError):
        viscosity_at_temperature(p, 100.0, "delayed")


def test_viscosities_decrease_with_temperature():
    p = table1_params(-1)
    temps = np.linspace(250.15, 272.15, 221)
    for which in ("instantaneous", "delayed"):
        values = [viscosity_at_temperature(p, T, which) for T in temps]
        assert np.all(np.diff(values) < 0)


def test_params_at_temperature_models():
    p = table1_params(-1)
    cold = params_at_temperature(p, 261.15)
    assert cold.k_i == p.k_i and cold.k_d == p.k_d
    assert cold.c_i > p.c_i and cold.c_d > p.c_d
    arr = params_at_temperature(p, 261.15, model="arrhenius")
    assert arr.c_i / p.c_i == pytest.approx(arr.c_d / p.c_d)
    with pytest.raises(ValueError):
        params_at_temperature(p, 261.15, model="nope")


def test_arrhenius_rate():
    assert arrhenius_rate(3.0, 0.0, 250.0) == 3.0
    assert arrhenius_rate(1.0, 120e3, 253.15) < arrhenius_rate(1.0, 120e3, 263.15)
    ratio = math.exp(-120e3 / 8.314 * (1 / 263.15 - 1 / 253.15))
    got = arrhenius_rate(1.0, 120e3, 263.15) / arrhenius_rate(1.0, 120e3, 253.15)
    assert got == pytest.approx(ratio, rel=1e-12)
    assert got == pytest.approx(8.7, rel=0.01)
    with pytest.raises(ValueError):
        arrhenius_rate(1.0, 1.0, 0.0)


def test_creep_response_reduces_to_closed_forms():
    p = table1_params(-1)
    t = np.linspace(0.0, 2.0, 41)
    np.testing.assert_allclose(creep_response(p, [(0.0, 0.08)], t),
                               creep_displacement(p, 0.08, t), rtol=1e-13)
    late = t[t >= 0.5]
    np.testing.assert_allclose(creep_response(p, [(0.0, 0.08), (0.5, 0.08), (0.5, 0.0)], late),
                               recovery_displacement(p, 0.08, 0.5, late), rtol=1e-12, atol=1e-18)
    assert creep_response(p, [(1.0, 0.08)], 0.5) == 0.0
    with pytest.raises(ValueError):
        creep_response(p, [(1.0, 0.1), (0.5, 0.0)], 1.0)


def test_creep_response_ramp_matches_element_integration():
    p = table1_params(-5)
    knots = [(0.0, 0.0), (0.2, 0.1), (0.5, 0.1), (0.6, 0.02)]
    dt = 1e-5
    state = BurgersState()
    t = 0.0
    for _ in range(int(round(1.0 / dt))):
        t += dt
        f = float(np.interp(t, [k[0] for k in knots], [k[1] for k in knots]))
        u = displacement_for_force(p, state, f, dt)
        _, state = burgers_step(p, state, u, dt)
    assert state.u_prev == pytest.approx(creep_response(p, knots, t), rel=1e-6)
