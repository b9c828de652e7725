"""Acceptance suites, shared by ``jjtorus verify`` and the test-suite."""

from dataclasses import dataclass, field
import math
import time

import numpy as np

from .bessel import bessel_zeros
from .dynamics import ModelParams, rotation_number
from .isomonodromy import (FoliationState, bessel_type_w, blowup_return,
                           constriction_image_check, flow_jacobian, foliation_rhs,
                           hamilton_vector_field, integrate_leaf, painleve_residual,
                           poincare_first_return, riccati_residual)
from .monodromy import LinearSystemParams, monodromy
from .phaselock import (bessel_asymptotics_residual, boundary_B, find_constrictions,
                        landing_intercept, trace_constriction_curve, curve_slope_at)
from .scan import ScanGrid, quantization_report


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    elapsed: float
    limit: float
    detail: dict = field(default_factory=dict)

    @property
    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.number:2d} {self.name} ({self.elapsed:.1f} s / {self.limit:.0f} s)"


def _timed(number, name, limit):
    def deco(fn):
        def run(threads=1):
            t0 = time.perf_counter()
            ok, detail = fn(threads) if fn.__code__.co_argcount else fn()
            dt = time.perf_counter() - t0
            return CriterionResult(number, name, bool(ok and dt < limit), dt, limit, detail)
        run.number = number
        run.__name__ = fn.__name__
        return run
    return deco


@_timed(1, "quantization of phase-lock areas", 300)
def quantization(threads=1):
    grid = ScanGrid((-2.0, 2.0), (-4.0, 4.0), 1.0, 64, 64).run(threads)
    rep = quantization_report(grid)
    return rep.ok and rep.locked_cells > 0, {
        "locked_cells": rep.locked_cells, "non_integer_locked": rep.non_integer_locked,
        "fragmented_rows": rep.fragmented_rows, "monotonicity_violations": rep.monotonicity_violations,
        "levels": rep.integers}


@_timed(2, "growth points at A = 0", 10)
def growth_points():
    worst = 0.0
    rows = []
    for r in (0, 1, 2):
        for alpha in (0.0, math.pi):
            B = boundary_B(r, alpha, 0.0, 1.0, None if r == 0 else math.sqrt(r * r + 1)).B
            # for r = 0 the two boundaries are B = -1 (alpha = 0) and B = +1 (alpha = pi)
            expect = math.sqrt(r * r + 1.0) * (-1.0 if (r == 0 and alpha == 0.0) else 1.0)
            err = abs(B - expect)
            worst = max(worst, err)
            rows.append((r, alpha, B, err))
    return worst < 1e-8, {"max_error": worst, "points": rows}


@_timed(3, "Bessel asymptotics of boundaries", 120)
def bessel_asymptotics():
    out = {}
    ok = True
    for r in (0, 1):
        res = []
        for A in (10.0, 15.0, 20.0, 25.0, 30.0):
            res.append(bessel_asymptotics_residual(r, 1.0, A, check_domain=False).residual)
        scaled = [x * A / math.log(A) for x, A in zip(res, (10, 15, 20, 25, 30))]
        decay = res[0] / res[-1]
        ok = ok and max(scaled) < 1.0 and decay >= 2.0
        out[r] = {"residuals": res, "scaled": scaled, "decay_10_to_30": decay}
    return ok, out


def _constrictions():
    found = []
    for omega in (1.0, 0.5):
        for ell in (0, 1):
            found += find_constrictions(ell, omega, 10.0)
    return found


@_timed(4, "constrictions lie on B = ell omega", 300)
def vertical_line():
    pts = _constrictions()
    off = max((p.vertical_offset for p in pts), default=math.inf)
    return len(pts) >= 3 and off < 1e-7, {
        "count": len(pts), "max_offset": off,
        "points": [(p.ell, p.omega, p.B, p.A, p.residual) for p in pts]}


@_timed(5, "constriction curves land orthogonally at Bessel zeros", 600)
def landing():
    out = {}
    ok = True
    for ell, k in ((0, 1), (0, 2), (1, 1)):
        c = trace_constriction_curve(ell, k, a_min=0.01, a_max=1.0)
        s0, _ = landing_intercept(c)
        target = bessel_zeros(ell, k)[k]
        slope = curve_slope_at(c, 1e-2)
        good = abs(s0 - target) < 1e-3 and abs(slope) < 0.05
        ok = ok and good
        out[f"C_{ell},{k}"] = {"intercept": s0, "zero": target, "error": abs(s0 - target),
                               "slope_at_0.01": slope, "vertices": len(c),
                               "max_residual": float(np.max(c.residual)), "reached_a": float(c.x[-1])}
    return ok, out


@_timed(6, "first-return map on the divisor", 30)
def divisor_return():
    z = bessel_zeros(0, 2)
    b = blowup_return(0, z[1])
    p = poincare_first_return(0, 1e-4, z[1])
    ok = abs(b.s1 - z[2]) < 1e-9 and p.defined and abs(p.s1 - b.s1) < 1e-3
    return ok, {"blowup_s1": b.s1, "s_02": z[2], "poincare_s1": p.s1, "poincare_a1": p.a1}


@_timed(7, "first-return map sends C_0,1 to C_0,2", 600)
def image_of_curve():
    rep = constriction_image_check(0, 1)
    return rep.ok(1e-4, 1e-7), {"max_distance": rep.max_distance,
                                "max_residual": rep.max_residual,
                                "records": [(r.a, r.s, r.a1, r.s1, r.distance) for r in rep.records]}


@_timed(8, "symplectic flow and Hamilton's equations", 30)
def symplectic():
    rng = np.random.default_rng(8)
    dets = []
    while len(dets) < 10:
        ell, chi, a = rng.uniform(-1, 2), rng.uniform(-0.4, 0.4), rng.uniform(-1, 1)
        s0 = rng.uniform(0.5, 4.0)
        try:
            J = flow_jacobian(ell, s0, s0 + rng.uniform(0.1, 1.0), (chi, a))
        except Exception:
            continue   # leg met a pole; draw another
        if np.all(np.abs(J) < 1e6):
            dets.append(abs(np.linalg.det(J) - 1.0))
    ham = []
    for _ in range(10):
        st = FoliationState(rng.uniform(-1, 2), rng.uniform(0.5, 4), rng.uniform(-1, 1), rng.uniform(-1, 1))
        f = np.array(foliation_rhs(st))
        g = np.array(hamilton_vector_field(st))
        ham.append(float(np.max(np.abs(f - g))))
    return max(dets) < 1e-8 and max(ham) < 1e-8, {"max_det_error": max(dets), "max_hamilton_error": max(ham)}


def _random_leaves(n=10, seed=9):
    rng = np.random.default_rng(seed)
    leaves = []
    for _ in range(n):
        ell, a0, s0 = rng.uniform(0.0, 2.0), rng.uniform(0.5, 2.0), rng.uniform(1.0, 5.0)
        leaves.append(((ell, a0, s0), integrate_leaf(FoliationState.from_chi_a(ell, 0.0, a0, s0), s0 + 10.0)))
    return leaves


_LEAVES = {}


def _leaves():
    if "v" not in _LEAVES:
        _LEAVES["v"] = _random_leaves()
    return _LEAVES["v"]


@_timed(9, "singularities are zero-type or pole-type", 300)
def dichotomy():
    events = [e for _, L in _leaves() for e in L.singularities()]
    worst = max((e.fit_residual for e in events), default=math.inf)
    kinds = sorted({e.kind for e in events})
    return bool(events) and worst < 1e-3, {"count": len(events), "kinds": kinds, "max_fit_residual": worst}


@_timed(10, "chi = 0 crossings are residue-one poles of w", 60)
def residue_one():
    cr = [e for _, L in _leaves() for e in L.crossings()]
    worst = max((abs(e.residue - 1.0) for e in cr), default=math.inf)
    return bool(cr) and worst < 1e-3, {"count": len(cr), "max_deviation": worst}


@_timed(11, "trivial monodromy at constrictions; Liouville", 120)
def trivial_monodromy():
    pts = _constrictions()
    dist = [monodromy(LinearSystemParams.josephson(p.B, p.A, p.omega)).distance_to_identity() for p in pts]
    rng = np.random.default_rng(11)
    liou = []
    for _ in range(20):
        P = LinearSystemParams(rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(-2, 2), rng.uniform(0.2, 3))
        liou.append(monodromy(P).liouville_error(P.ell))
    return bool(pts) and max(dist) < 1e-6 and max(liou) < 1e-8, {
        "constrictions": len(pts), "max_distance_to_identity": max(dist, default=math.nan),
        "max_liouville_error": max(liou)}


@_timed(12, "Bessel-type solutions of Painleve 3", 30)
def bessel_type():
    worst = {}
    for ell in (0, 1):
        zeros = bessel_zeros(ell, 4).zeros
        m = 0.0
        for s in np.linspace(1.0, 10.0, 901):
            if np.min(np.abs(zeros - s)) < 0.05:
                continue   # off the poles of w
            w, wp, wpp = bessel_type_w(ell, float(s))
            m = max(m, abs(riccati_residual(ell, s, w, wp)), abs(painleve_residual(ell, s, w, wp, wpp)))
        worst[ell] = m
    return max(worst.values()) < 1e-6, {"max_residual": worst}


CRITERIA = [quantization, growth_points, bessel_asymptotics, vertical_line, landing,
            divisor_return, image_of_curve, symplectic, dichotomy, residue_one,
            trivial_monodromy, bessel_type]

SUITES = {
    "dynamics": [quantization],
    "bessel": [bessel_type],
    "phaselock": [growth_points, bessel_asymptotics, vertical_line, landing],
    "isomonodromy": [divisor_return, image_of_curve, symplectic, dichotomy, residue_one],
    "monodromy": [trivial_monodromy],
    "all": CRITERIA,
}


def run_suite(name, threads=1, echo=None):
    if name not in SUITES:
        raise KeyError(name)
    results = []
    for crit in SUITES[name]:
        res = crit(threads) if crit is quantization else crit()
        if echo:
            echo(res.line)
        results.append(res)
    return results


def rotation_check(B, A, omega):
    """Convenience used by probes: rotation result at a physical point."""
    return rotation_number(ModelParams(B, A, omega))
