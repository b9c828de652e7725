import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import jv

from jjtorus import (DomainError, ModelParams, ScaledParams, circle_map, dh_da_at_a0,
                     finite_difference_probe, flow_lift, rotation_number, to_physical,
                     to_scaled, variational_probe, vector_field)
from jjtorus.bessel import bessel_zeros
from jjtorus.dynamics import TWO_PI

finite = st.floats(-3.0, 3.0, allow_nan=False)


def test_to_scaled_examples():
    assert to_scaled((1.0, 2.0, 0.5)) == (2.0, 2.0, 4.0)
    assert to_scaled((0.0, 0.0, 1.0)) == (0.0, 1.0, 0.0)
    assert np.allclose(to_physical(to_scaled((3.0, -1.0, 0.25))), (3.0, -1.0, 0.25), rtol=1e-15)


@pytest.mark.parametrize("omega", [0.0, -1.0])
def test_to_scaled_rejects_nonpositive_omega(omega):
    with pytest.raises(DomainError):
        to_scaled((1.0, 1.0, omega))


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.05, 10))
def test_scaled_round_trip(B, A, omega):
    ell, a, s = to_scaled((B, A, omega))
    assert a == 1.0 / omega
    B2, A2, w2 = to_physical((ell, a, s))
    assert abs(B2 - B) <= 4e-16 * max(1.0, abs(B))
    assert abs(A2 - A) <= 4e-16 * max(1.0, abs(A))
    assert abs(w2 - omega) <= 4e-16 * omega


def test_vector_field_examples():
    assert vector_field(0, 0, 0, 0, 0) == 0
    # all three terms contribute at theta = tau = 0
    assert vector_field(0, 0, 1, 1, 1) == 3
    assert vector_field(math.pi / 2, math.pi, 0.3, 1.7, 0.9) == pytest.approx(0.3 - 0.9, abs=1e-15)


def test_linear_flow_exact():
    assert flow_lift(0.4, 0.0, 5.0, ScaledParams(0.7, 0.0, 0.0)) == pytest.approx(0.4 + 3.5, abs=1e-12)


@pytest.mark.parametrize("ell,s", [(0.0, 1.0), (1.3, 2.5), (-0.4, 4.0)])
def test_a_zero_closed_form(ell, s):
    th0, t0, t1 = 0.3, 0.5, 7.0
    expect = th0 + ell * (t1 - t0) + s * (math.sin(t1) - math.sin(t0))
    assert flow_lift(th0, t0, t1, ScaledParams(ell, 0.0, s)) == pytest.approx(expect, abs=1e-9)


def test_circle_map_identity_translation_at_a0():
    th = np.linspace(0, TWO_PI, 7)
    assert np.allclose(circle_map(ScaledParams(2.0, 0.0, 1.3), th), th + 2 * TWO_PI, atol=1e-9)


def test_autonomous_quadrature():
    # d theta / d tau = a cos theta separates to tan(theta/2 + pi/4) = C e^{a tau}
    a = 0.5
    for th0 in (-1.2, 0.0, 0.9):
        expect = 2 * math.atan(math.tan(th0 / 2 + math.pi / 4) * math.exp(a * TWO_PI)) - math.pi / 2
        assert circle_map(ScaledParams(0.0, a, 0.0), th0) == pytest.approx(expect, abs=1e-9)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-3, 3), st.floats(-4, 4))
def test_degree_one_and_monotone(ell, a, s, th0):
    p = ScaledParams(ell, a, s)
    h0 = circle_map(p, th0)
    assert circle_map(p, th0 + TWO_PI) == pytest.approx(h0 + TWO_PI, abs=1e-8)
    assert flow_lift(th0 + TWO_PI, 0.3, 2.0, p) == pytest.approx(flow_lift(th0, 0.3, 2.0, p) + TWO_PI, abs=1e-8)
    assert variational_probe(p, th0).dh_dtheta[0] > 0


def test_rotation_autonomous_locked():
    r = rotation_number(ModelParams(0.5, 0.0, 1.0))
    assert r.locked and r.rho == 0 and r.lock_integer == 0


def test_rotation_autonomous_quadrature():
    # for |B| > 1 and A = 0 the phase period gives rho = sqrt(B^2 - 1) / omega
    assert rotation_number(ModelParams(math.sqrt(2.0), 0.0, 1.0)).rho == pytest.approx(1.0, abs=1e-9)
    r = rotation_number(ModelParams(1.5, 0.0, 1.0))
    lo, hi = r.bracket
    assert not r.locked and lo <= math.sqrt(1.25) <= hi and hi - lo < 0.02


@settings(max_examples=20)
@given(st.floats(-2.0, 2.0), st.floats(-4.0, 4.0))
def test_rotation_symmetries(B, A):
    base = rotation_number(ModelParams(B, A, 1.0))
    width = max(base.bracket[1] - base.bracket[0], 1e-12)
    for other, sign in ((rotation_number(ModelParams(-B, A, 1.0)), -1),
                        (rotation_number(ModelParams(B, -A, 1.0)), 1)):
        assert abs(other.rho - sign * base.rho) <= 2 * width
        if base.locked and other.locked:
            assert other.rho == sign * base.rho


def test_dh_da_examples():
    assert dh_da_at_a0(1, 2.0, math.pi / 2) == pytest.approx(0.0, abs=1e-15)
    z = bessel_zeros(0, 1)[1]
    assert np.allclose(dh_da_at_a0(0, z, np.linspace(0, 6, 5)), 0.0, atol=1e-13)


@pytest.mark.parametrize("ell,s,th0", [(0, 1.5, 0.2), (1, 2.0, 1.0), (2, 3.3, -0.7)])
def test_dh_da_matches_finite_difference(ell, s, th0):
    eps = 1e-6
    fd = (circle_map(ScaledParams(ell, eps, s), th0) - circle_map(ScaledParams(ell, 0.0, s), th0)) / eps
    assert dh_da_at_a0(ell, s, th0) == pytest.approx(fd, abs=1e-4)


def test_variational_at_a0_translation():
    pr = variational_probe(ScaledParams(0.5, 0.0, 1.7), np.array([0.1, 2.0]))
    assert np.all(pr.dh_dtheta == 1.0)


@pytest.mark.parametrize("ell,s", [(0, 1.2), (1, 2.7), (2, 4.1)])
def test_mixed_derivative_at_a0(ell, s):
    th0 = 0.6
    pr = variational_probe(ScaledParams(ell, 0.0, s), th0)
    expect = math.pi * math.cos(th0) * (jv(ell + 1, -s) - jv(ell - 1, -s))
    assert pr.d2h_dads[0] == pytest.approx(expect, abs=1e-8)


def test_variational_matches_central_differences():
    p = ScaledParams(1.0, 0.7, 2.3)
    th = np.array([0.0, 1.1, 4.0])
    pr = variational_probe(p, th, tol=1e-13)
    fd = finite_difference_probe(p, th)
    for name in ("dh_dtheta", "dh_da", "dh_ds", "dh_dell"):
        assert np.allclose(getattr(pr, name), fd[name], atol=1e-6), name


@settings(max_examples=10)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-3, 3), st.floats(-3, 3))
def test_jitted_integrator_matches_scipy(ell, a, s, th0):
    from scipy.integrate import solve_ivp
    ref = solve_ivp(lambda t, y: [a * math.cos(y[0]) + ell + s * math.cos(t)], (0.2, 9.0), [th0],
                    method="Radau", rtol=1e-12, atol=1e-12).y[0, -1]
    assert flow_lift(th0, 0.2, 9.0, ScaledParams(ell, a, s)) == pytest.approx(ref, abs=1e-8)
