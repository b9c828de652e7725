import math

import numpy as np
import pytest
from scipy.special import jnp_zeros

from jjtorus import ModelParams, NotFoundError, rotation_number
from jjtorus.bessel import bessel_zeros
from jjtorus.phaselock import (bessel_asymptotics_residual, boundary_B, boundary_curve,
                               certify_constriction, count_constrictions_below, curve_slope_at,
                               find_constriction, find_constrictions, landing_intercept,
                               paired_alpha, positivity_probe, trace_constriction_curve)

PI = math.pi


@pytest.mark.parametrize("r,omega", [(1, 1.0), (2, 1.0), (1, 0.5)])
def test_growth_points(r, omega):
    # at A = 0 the flow is autonomous; locking at r ends where sqrt(B^2 - 1) = r omega
    expect = math.sqrt(r * r * omega * omega + 1.0)
    for alpha in (0.0, PI):
        assert boundary_B(r, alpha, 0.0, omega, expect + 0.05).B == pytest.approx(expect, abs=1e-9)


def test_zero_lock_edges_at_A0():
    assert boundary_B(0, 0.0, 0.0, 1.0).B == pytest.approx(-1.0, abs=1e-9)
    assert boundary_B(0, PI, 0.0, 1.0).B == pytest.approx(1.0, abs=1e-9)


def test_zero_lock_has_width_at_A2():
    lo, hi = boundary_B(0, 0.0, 2.0, 1.0), boundary_B(0, PI, 2.0, 1.0)
    assert hi.B - lo.B > 0.1
    assert lo.residual < 1e-9 and hi.residual < 1e-9
    # the interior locks at 0 and the outside does not
    assert rotation_number(ModelParams(0.5 * (lo.B + hi.B), 2.0, 1.0)).lock_integer == 0
    assert not rotation_number(ModelParams(hi.B + 0.05, 2.0, 1.0)).lock_integer == 0


@pytest.mark.parametrize("r,alpha,A", [(1, 0.0, 1.5), (1, PI, 1.5), (2, 0.0, 2.5), (0, 0.0, 1.0)])
def test_pairing_under_B_reflection(r, alpha, A):
    g = boundary_B(r, alpha, A, 1.0, None if r == 0 else math.sqrt(r * r + 1))
    m = boundary_B(-r, paired_alpha(r, alpha), A, 1.0, -g.B)
    assert m.B == pytest.approx(-g.B, abs=1e-9)


@pytest.mark.parametrize("alpha", [0.0, PI])
def test_reflection_in_A(alpha):
    # tau -> tau + pi maps A to -A and moves the fixed point from alpha to alpha + pi,
    # so the lock area is mirror symmetric with its two edges exchanged
    c = boundary_curve(1, alpha, 1.0, 0.0, 3.0, 7)
    m = boundary_curve(1, PI - alpha, 1.0, 0.0, -3.0, 7)
    assert np.allclose(c.y, m.y, atol=1e-9)
    assert c.y[0] == pytest.approx(math.sqrt(2.0), abs=1e-9)


def test_boundary_curve_points_are_boundaries():
    c = boundary_curve(0, PI, 1.0, 0.0, 10.0, 11)
    assert np.all(c.residual < 1e-9)


def test_asymptotics_decay_and_bound():
    res = [bessel_asymptotics_residual(0, 1.0, A).residual for A in (10.0, 15.0, 20.0, 25.0, 30.0)]
    assert res[0] / res[-1] >= 2.0
    scaled = [x * A / math.log(A) for x, A in zip(res, (10, 15, 20, 25, 30))]
    assert max(scaled) < 1.0


def test_asymptotics_r1_at_20():
    assert bessel_asymptotics_residual(1, 1.0, 20.0).residual < 0.05


def test_constriction_ell1_between_extrema_of_J1():
    u1, u2 = jnp_zeros(1, 2)
    p = find_constriction(1, 1.0, (u1, u2))
    assert u1 < p.s < u2
    assert p.residual < 1e-8 and p.deriv_residual < 1e-6
    assert p.vertical_offset < 1e-7


def test_lowest_constriction_ell0_on_B_axis():
    p = find_constrictions(0, 1.0, 4.0)[0]
    assert abs(p.B) < 1e-7 and 2.0 < p.A < 4.0
    assert certify_constriction(0, p.B, p.A, 1.0).residual < 1e-8
    for r in positivity_probe(p):
        assert r.locked and r.lock_integer == 0


def test_no_sign_change_is_not_found():
    with pytest.raises(NotFoundError):
        find_constriction(0, 1.0, (0.5, 1.0))


def test_counts():
    assert count_constrictions_below(0, 1.0, 2.0) == 0
    counts = [count_constrictions_below(1, 1.0, A) for A in (3.0, 5.0, 8.0, 10.0)]
    assert counts == sorted(counts) and counts[-1] >= 2


def test_count_small_omega():
    omega = 0.3
    assert count_constrictions_below(0, omega, 10 * omega * bessel_zeros(0, 3)[3]) >= 2


@pytest.mark.parametrize("ell,k", [(0, 1), (0, 2), (1, 1)])
def test_curve_landing(ell, k):
    c = trace_constriction_curve(ell, k)
    s0, _ = landing_intercept(c)
    assert s0 == pytest.approx(bessel_zeros(ell, k)[k], abs=1e-3)
    assert abs(curve_slope_at(c, 0.01)) < 0.05
    assert c.x.max() >= 1.0 - 1e-12
    assert np.all(c.residual < 1e-8)


def test_curve_meets_constriction_at_a1():
    # omega = 1 is a = 1; the traced curve passes through the constriction found by search
    c = trace_constriction_curve(0, 1)
    p = find_constrictions(0, 1.0, 4.0)[0]
    s_at_1 = float(np.interp(1.0, c.x, c.y))
    assert s_at_1 == pytest.approx(p.s, abs=1e-6)


def test_obstruction_vanishes_at_intercepts():
    from jjtorus.dynamics import dh_da_at_a0
    for ell, k in ((0, 1), (1, 1)):
        s0, _ = landing_intercept(trace_constriction_curve(ell, k))
        assert np.max(np.abs(dh_da_at_a0(ell, s0, np.linspace(0, 6, 7)))) < 1e-3


def test_curves_for_distinct_k_do_not_meet():
    c1, c2 = trace_constriction_curve(0, 1), trace_constriction_curve(0, 2)
    grid = np.linspace(0.02, 1.0, 50)
    assert np.all(np.interp(grid, c2.x, c2.y) - np.interp(grid, c1.x, c1.y) > 1.0)


def test_boundary_order_flips_only_at_constrictions():
    from jjtorus.phaselock import boundary_gap
    pts = find_constrictions(0, 1.0, 10.0)
    cuts = [0.0] + [p.A for p in pts] + [10.0]
    signs = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        inner = np.linspace(lo, hi, 6)[1:-1]
        s = {np.sign(boundary_gap(0, 1.0, A)[0]) for A in inner}
        assert len(s) == 1
        signs.append(s.pop())
    # the two edges exchange sides at every constriction
    assert all(a == -b for a, b in zip(signs[:-1], signs[1:]))
    for p in pts:
        assert abs(boundary_gap(0, 1.0, p.A)[0]) < 1e-7
