import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jjtorus import DomainError, OnDivisorError, ScaledParams, rotation_number
from jjtorus.bessel import bessel_zeros
from jjtorus.isomonodromy import (CHARTS, INV_A, INV_BOTH, INV_CHI, POLE_PLUS, STANDARD,
                                  ZERO_UNIT, FoliationState, blowup_return, chart_rhs,
                                  circuit_probe, constriction_image_check, energy_balance,
                                  flow_jacobian, flow_map, foliation_rhs, hamilton_vector_field,
                                  hamiltonian, integrate_leaf, leaf_painleve_residual,
                                  painleve_w, poincare_first_return, poincare_preserves_rotation,
                                  rhs_jacobian)
from jjtorus.phaselock import solve_on_curve, trace_constriction_curve

coord = st.floats(-1.5, 1.5).filter(lambda x: abs(x) > 0.05)


def test_rhs_on_chi_zero():
    ell, a, s = 0.7, 1.3, 2.1
    d = foliation_rhs(FoliationState(ell, s, 0.0, a))
    assert d == pytest.approx((a / (2 * s), a * ell / s), abs=1e-15)


def test_invariant_plane():
    assert foliation_rhs(FoliationState(1.0, 3.0, 0.0, 0.0)) == (0.0, 0.0)
    leaf = integrate_leaf(FoliationState(1.0, 3.0, 0.0, 0.0), 9.0)
    assert leaf.state.chi == 0.0 and leaf.state.a == 0.0


def test_rhs_s_zero_rejected():
    with pytest.raises(DomainError):
        foliation_rhs(FoliationState(0.0, 0.0, 0.1, 0.1))


def _standard_from_chart(state):
    """(chi', a') recovered from the chart derivatives by the chain rule."""
    dp, dq = foliation_rhs(state)
    ic, ia = CHARTS[state.chart]
    dchi = -dp / state.p ** 2 if ic else dp
    da = -dq / state.q ** 2 if ia else dq
    return dchi, da


def test_u_chart_against_standard():
    std = foliation_rhs(FoliationState.from_chi_a(1.0, 0.5, 1.0, 2.0, STANDARD))
    inv = FoliationState.from_chi_a(1.0, 0.5, 1.0, 2.0, INV_CHI)
    assert inv.p == 2.0
    assert _standard_from_chart(inv) == pytest.approx(std, rel=1e-14)


@given(st.floats(-2, 2), coord, coord, st.floats(0.3, 5.0))
def test_all_charts_agree(ell, chi, a, s):
    std = foliation_rhs(FoliationState.from_chi_a(ell, chi, a, s, STANDARD))
    for chart in (INV_CHI, INV_A, INV_BOTH):
        got = _standard_from_chart(FoliationState.from_chi_a(ell, chi, a, s, chart))
        assert got == pytest.approx(std, rel=1e-9, abs=1e-12)


def test_hamiltonian_special_cases():
    assert hamiltonian(FoliationState(0.4, 2.0, 0.0, 1.2)) == pytest.approx(1.2 ** 2 / 8.0)
    assert hamiltonian(FoliationState(0.4, 2.0, 0.7, 0.0)) == pytest.approx(2.0 * 0.49)


@given(st.floats(-2, 2), st.floats(-1, 1), st.floats(-1, 1), st.floats(0.3, 5.0))
def test_hamilton_equations(ell, chi, a, s):
    st_ = FoliationState(ell, s, chi, a)
    assert hamilton_vector_field(st_) == pytest.approx(foliation_rhs(st_), abs=1e-8)


@given(st.floats(-2, 2), st.floats(-1, 1), st.floats(-1, 1), st.floats(0.3, 5.0))
def test_field_is_divergence_free(ell, chi, a, s):
    assert np.trace(rhs_jacobian(ell, chi, a, s)) == pytest.approx(0.0, abs=1e-12)


def _pole_free_leaf():
    leaf = integrate_leaf(FoliationState.from_chi_a(0.5, 0.1, 0.3, 1.0), 3.0)
    assert leaf.complete and not leaf.singularities() and leaf.state.chart == STANDARD
    return leaf


def test_energy_balance():
    leaf = _pole_free_leaf()
    s = np.linspace(1.0, 3.0, 401)
    assert np.max(energy_balance(leaf, s)) < 1e-7


def test_painleve_w_kinds():
    assert painleve_w(FoliationState(0.0, 2.0, 0.0, 1.0)).kind == POLE_PLUS
    assert math.isinf(painleve_w(FoliationState(0.0, 2.0, 0.0, 1.0)).w)
    assert painleve_w(FoliationState(0.0, 2.0, 0.4, 0.0)).w == 0.0
    with pytest.raises(OnDivisorError):
        painleve_w(FoliationState(0.0, 2.0, 0.0, 0.0))


def test_painleve_residual_along_leaf():
    leaf = integrate_leaf(FoliationState.from_chi_a(0.8, 0.0, 1.1, 2.0), 12.0)
    res = leaf_painleve_residual(leaf, np.linspace(2.01, leaf.state.s - 0.01, 400))
    assert np.sum(np.isfinite(res)) > 300
    assert np.nanmax(res) < 1e-6


def test_singularities_are_classified():
    leaf = integrate_leaf(FoliationState.from_chi_a(1.2, 0.0, 1.5, 1.5), 11.5)
    assert leaf.complete
    kinds = {e.kind for e in leaf.singularities()}
    assert kinds == {"zero-type", "pole-type"}
    for e in leaf.singularities():
        assert e.fit_residual < 1e-4
        if e.kind == "zero-type":
            # a(s0) = +-s0, chi ~ +-1/(2 (s - s0)), w(s0) = 0 with w'(s0) = 1
            assert e.value == pytest.approx(e.sign * e.s0, abs=1e-6)
            assert e.residue == pytest.approx(e.sign * 0.5, abs=1e-6)
            assert e.w_data == pytest.approx(1.0, abs=1e-4)
        else:
            # a ~ +-s0/(s - s0), chi(s0) = -+1/2, w has residue -1
            assert e.residue == pytest.approx(e.sign * e.s0, rel=1e-6)
            assert e.value == pytest.approx(-e.sign * 0.5, abs=1e-6)
            assert e.w_data == pytest.approx(-1.0, abs=1e-3)


def test_chi_zero_crossings_have_residue_one():
    leaf = integrate_leaf(FoliationState.from_chi_a(0.8, 0.0, 1.1, 2.0), 12.0)
    crossings = leaf.crossings()
    assert len(crossings) == 3
    for c in crossings:
        assert c.residue == pytest.approx(1.0, abs=1e-3)


def test_chart_switch_threshold_does_not_change_leaf():
    st0 = FoliationState.from_chi_a(0.3, 0.0, 0.9, 1.2)
    a = integrate_leaf(st0, 9.0)
    b = integrate_leaf(st0, 9.0, switch=1.5)
    assert [e.kind for e in a.events] == [e.kind for e in b.events]
    assert abs(complex(a.state.chi) - complex(b.state.chi)) < 1e-9
    assert abs(complex(a.state.a) - complex(b.state.a)) < 1e-9


def test_detour_radius_does_not_change_leaf():
    st0 = FoliationState.from_chi_a(1.2, 0.0, 1.5, 1.5)
    a = integrate_leaf(st0, 11.5)
    b = integrate_leaf(st0, 11.5, detour_rel=5e-3)
    assert [e.kind for e in a.events] == [e.kind for e in b.events]
    assert complex(a.state.a) == pytest.approx(complex(b.state.a), rel=1e-7, abs=1e-8)


def test_constriction_leaf_is_single_valued_around_zero():
    s = solve_on_curve(0, 0.05, bessel_zeros(0, 1)[1])
    rep = circuit_probe(FoliationState.from_chi_a(0, 0.0, 0.05, s))
    assert rep.outcome == "identity"


def test_first_return_near_divisor():
    z = bessel_zeros(0, 2)
    r = poincare_first_return(0, 1e-4, z[1])
    assert r.defined and r.ell == 0
    assert r.s1 == pytest.approx(z[2], abs=1e-3)
    assert 1e-5 < abs(r.a1) < 1e-3


def test_first_return_on_divisor_rejected():
    with pytest.raises(OnDivisorError):
        poincare_first_return(0, 0.0, 2.0)


def test_first_return_preserves_rotation_number():
    s = solve_on_curve(0, 0.2, bessel_zeros(0, 1)[1])
    r = poincare_first_return(0, 0.2, s)
    before, after = poincare_preserves_rotation(0, 0.2, s, r)
    assert before.locked and after.locked and before.rho == after.rho
    # a generic point off the curves
    r = poincare_first_return(0.4, 0.3, 1.7)
    if r.defined:
        before, after = poincare_preserves_rotation(0.4, 0.3, 1.7, r)
        assert after.rho == pytest.approx(before.rho, abs=1e-2)


def test_blowup_return():
    z = bessel_zeros(0, 2)
    b = blowup_return(0, z[1])
    assert b.s1 == pytest.approx(z[2], abs=1e-9)
    assert b.riccati_residual < 1e-8


def test_return_map_converges_to_blowup():
    s0 = 3.1
    limit = blowup_return(0.5, s0).s1
    gaps = [abs(poincare_first_return(0.5, a0, s0).s1 - limit) for a0 in (1e-2, 1e-3, 1e-4)]
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-4


def test_flow_jacobian():
    at = (0.2, -0.4)
    assert np.allclose(flow_jacobian(0.7, 1.5, 1.5, at), np.eye(2))
    J = flow_jacobian(0.7, 1.5, 2.4, at)
    assert np.linalg.det(J) == pytest.approx(1.0, abs=1e-8)
    h = 1e-6
    fd = np.column_stack([
        (flow_map(0.7, 1.5, 2.4, (at[0] + h, at[1])) - flow_map(0.7, 1.5, 2.4, (at[0] - h, at[1]))) / (2 * h),
        (flow_map(0.7, 1.5, 2.4, (at[0], at[1] + h)) - flow_map(0.7, 1.5, 2.4, (at[0], at[1] - h))) / (2 * h)])
    assert np.allclose(J, fd, atol=1e-5)


@given(st.floats(-1, 2), st.floats(-0.4, 0.4), st.floats(-1, 1), st.floats(0.5, 4.0), st.floats(0.1, 0.5))
def test_flow_is_symplectic(ell, chi, a, s0, ds):
    J = flow_jacobian(ell, s0, s0 + ds, (chi, a))
    if np.all(np.abs(J) < 1e4):
        assert np.linalg.det(J) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("ell", [0, 1])
def test_images_of_constriction_curves(ell):
    rep = constriction_image_check(ell, 1, n=3)
    assert rep.ok(1e-4, 1e-7)
