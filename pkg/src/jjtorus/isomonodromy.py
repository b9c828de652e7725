"""The isomonodromic foliation and its first-return map to chi = 0.

Leaves are graphs s -> (chi(s), a(s)) of

    chi' = (a - 2 chi (ell + 2 chi a)) / (2 s)
    a'   = -2 s chi + (a / s) (ell + 2 chi a)

with ell constant.  The system is Hamiltonian, and w = a / (2 s chi) solves
a Painleve 3 equation.  Solutions are meromorphic, and this is what the
integrator relies on: near a pole of chi or of a, the integration leaves the
real axis, goes around a small circle centred at the predicted singularity
and comes back to the real axis; by single-valuedness the path does not
matter.  The same circle gives Taylor coefficients (by FFT), from which the
singularity is located and classified.

Four charts are used: the coordinates (p, q) are (chi or u = 1/chi, a or
b = 1/a).
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp

from . import _rk
from .bessel import bessel_j, bessel_jp, next_zero_of_solution
from .dynamics import TWO_PI, ScaledParams, rotation_number
from .errors import (DomainError, IntegrationError, OnDivisorError,
                     UnclassifiableSingularity)

STANDARD = "standard"
INV_CHI = "inverted-chi"
INV_A = "inverted-a"
INV_BOTH = "inverted-both"
CHARTS = {STANDARD: (False, False), INV_CHI: (True, False),
          INV_A: (False, True), INV_BOTH: (True, True)}
_BY_FLAGS = {v: k for k, v in CHARTS.items()}

SWITCH = 2.0            # enter an inverted chart at |x| = 2, leave at |1/x| = 2
LEAF_TOL = 1e-12
DETOUR_REL = 1e-2       # detour radius relative to |s|
N_CIRCLE = 128
CLOSURE_TOL = 1e-7
ZERO_TYPE_TOL = 1e-6
W_TOL = 1e-4
RESIDUE_TOL = 1e-3

REGULAR = "regular"
ZERO_UNIT = "zero-unit-derivative"
POLE_PLUS = "pole-residue-plus"
POLE_MINUS = "pole-residue-minus"


def _inv(x):
    return math.inf if x == 0 else 1.0 / x


@dataclass
class FoliationState:
    """A point of the extended space, stored in chart coordinates (p, q)."""

    ell: float
    s: complex
    p: complex
    q: complex
    chart: str = STANDARD

    @classmethod
    def from_chi_a(cls, ell, chi, a, s, chart=None):
        if chart is None:
            chart = _BY_FLAGS[(abs(chi) > SWITCH, abs(a) > SWITCH)]
        ic, ia = CHARTS[chart]
        return cls(ell, s, _inv(chi) if ic else chi, _inv(a) if ia else a, chart)

    @property
    def chi(self):
        return _inv(self.p) if CHARTS[self.chart][0] else self.p

    @property
    def a(self):
        return _inv(self.q) if CHARTS[self.chart][1] else self.q

    @property
    def psi(self):
        return 2.0 * self.s * self.chi

    @property
    def nu(self):
        return self.ell + 2.0 * self.chi * self.a

    def in_chart(self, chart):
        return FoliationState.from_chi_a(self.ell, self.chi, self.a, self.s, chart)


def chart_rhs(ell, s, p, q, chart):
    """Derivatives of the chart coordinates.

    inverted-chi: u' = (-a u^2 + 2 ell u + 4 a)/(2 s),
                  a' = 2 (a^2 - s^2)/(u s) + a ell / s
    inverted-a (b' = -b^2 a'):
                  chi' = (1 - 4 chi^2 - 2 ell chi b)/(2 s b),
                  b' = 2 s chi b^2 - b ell / s - 2 chi / s
    inverted-both:
                  u' = (-u^2 + 2 ell u b + 4)/(2 s b),
                  b' = (2 s^2 b^2 - ell b u - 2)/(u s)
    """
    if chart == STANDARD:
        chi, a = p, q
        return ((a - 2.0 * chi * (ell + 2.0 * chi * a)) / (2.0 * s),
                -2.0 * s * chi + (a / s) * (ell + 2.0 * chi * a))
    if chart == INV_CHI:
        u, a = p, q
        return ((-a * u * u + 2.0 * ell * u + 4.0 * a) / (2.0 * s),
                2.0 * (a * a - s * s) / (u * s) + a * ell / s)
    if chart == INV_A:
        chi, b = p, q
        return ((1.0 - 4.0 * chi * chi - 2.0 * ell * chi * b) / (2.0 * s * b),
                2.0 * s * chi * b * b - b * ell / s - 2.0 * chi / s)
    u, b = p, q
    return ((-u * u + 2.0 * ell * u * b + 4.0) / (2.0 * s * b),
            (2.0 * s * s * b * b - ell * b * u - 2.0) / (u * s))


def foliation_rhs(state):
    """Right-hand side in the active chart of ``state``."""
    if state.s == 0:
        raise DomainError("s = 0 is not in the domain of the foliation")
    return chart_rhs(state.ell, state.s, state.p, state.q, state.chart)


def hamiltonian(state):
    """H = -chi^2 a^2/s + a^2/(4 s) + s chi^2 - ell chi a / s."""
    chi, a, s, ell = state.chi, state.a, state.s, state.ell
    if s == 0:
        raise DomainError("s = 0")
    return -chi * chi * a * a / s + a * a / (4.0 * s) + s * chi * chi - ell * chi * a / s


def hamiltonian_ds(state):
    """Explicit partial derivative dH/ds at fixed (chi, a)."""
    chi, a, s, ell = state.chi, state.a, state.s, state.ell
    return (chi * chi * a * a / s ** 2 - a * a / (4.0 * s ** 2) + chi * chi
            + ell * chi * a / s ** 2)


def hamilton_vector_field(state, h=1e-6):
    """(dH/da, -dH/dchi) by central differences of ``hamiltonian``."""
    chi, a = state.chi, state.a

    def H(c, x):
        return hamiltonian(FoliationState(state.ell, state.s, c, x))

    dHda = (H(chi, a + h) - H(chi, a - h)) / (2.0 * h)
    dHdc = (H(chi + h, a) - H(chi - h, a)) / (2.0 * h)
    return dHda, -dHdc


def rhs_jacobian(ell, chi, a, s):
    """Jacobian of the standard-chart field in (chi, a); its trace vanishes."""
    return np.array([[(-2.0 * ell - 8.0 * chi * a) / (2.0 * s), (1.0 - 4.0 * chi * chi) / (2.0 * s)],
                     [-2.0 * s + 2.0 * a * a / s, (ell + 4.0 * chi * a) / s]])


# -- events and the trajectory record ------------------------------------------------

@dataclass
class SingularityEvent:
    """A singular point or chi = 0 crossing met along a leaf.

    kind is "zero-type" (chi has a pole, w a zero), "pole-type" (a has a
    pole, w a pole of residue -1) or "chi-zero" (w a pole of residue +1).
    """

    kind: str
    s0: float
    sign: int
    residue: float
    value: float
    w_data: float
    fit_residual: float
    radius: float

    @property
    def sample_kind(self):
        return {"zero-type": ZERO_UNIT, "pole-type": POLE_MINUS, "chi-zero": POLE_PLUS}[self.kind]


@dataclass
class _Piece:
    lo: float
    hi: float
    chart: str
    sol: object = None          # OdeSolution over [lo, hi] (either orientation)
    centre: float = 0.0         # Taylor pieces: expansion point and coefficients
    cp: np.ndarray = None
    cq: np.ndarray = None

    def contains(self, s):
        return min(self.lo, self.hi) <= s <= max(self.lo, self.hi)

    def coords(self, s):
        if self.sol is not None:
            y = self.sol(s)
            return y[0], y[1]
        z = s - self.centre
        return (np.polyval(self.cp[::-1], z).real, np.polyval(self.cq[::-1], z).real)


@dataclass
class LeafResult:
    state: FoliationState
    events: list
    pieces: list = field(default_factory=list)
    complete: bool = True
    reason: str = ""

    def chart_at(self, s):
        return self._piece(s).chart

    def _piece(self, s, slack=1e-8):
        for pc in self.pieces:
            if pc.contains(s):
                return pc
        # allow evaluation just past an end point (dense output extrapolates smoothly)
        near = min(self.pieces, key=lambda pc: min(abs(s - pc.lo), abs(s - pc.hi)), default=None)
        if near is not None and min(abs(s - near.lo), abs(s - near.hi)) <= slack * max(1.0, abs(s)):
            return near
        raise DomainError(f"s = {s} outside the integrated range")

    def state_at(self, s):
        pc = self._piece(s)
        p, q = pc.coords(s)
        return FoliationState(self.state.ell, s, float(p), float(q), pc.chart)

    def chi_a(self, s_values):
        """(chi, a) arrays at the given s values (inf at poles)."""
        out = np.empty((2, len(s_values)))
        for i, s in enumerate(s_values):
            st = self.state_at(s)
            out[:, i] = st.chi, st.a
        return out

    def singularities(self):
        return [e for e in self.events if e.kind != "chi-zero"]

    def crossings(self):
        return [e for e in self.events if e.kind == "chi-zero"]

    def records(self, s_values):
        """(s, chi, a, chart, event) rows for export."""
        ev = {round(e.s0, 12): e.kind for e in self.events}
        rows = []
        for s in s_values:
            st = self.state_at(s)
            rows.append((s, st.chi, st.a, st.chart, ev.get(round(s, 12), "")))
        for e in self.events:
            st = self.state_at(e.s0)
            rows.append((e.s0, st.chi, st.a, st.chart, e.kind))
        rows.sort(key=lambda r: r[0])
        return rows


def _leaving(chart, p, q, switch=SWITCH):
    """Chart to use given current coordinates, with hysteresis at |x| = 2.

    A plain coordinate is inverted once it exceeds SWITCH in modulus; an
    inverted one is restored once it exceeds SWITCH.
    """
    flags = tuple((not inv) if abs(x) > switch else inv
                  for x, inv in zip((p, q), CHARTS[chart]))
    return _BY_FLAGS[flags]


def _convert(chart, p, q, new):
    ic, ia = CHARTS[chart]
    nic, nia = CHARTS[new]
    if ic != nic:
        p = _inv(p)
    if ia != nia:
        q = _inv(q)
    return p, q


def _skip_start(fun, t0, sgn):
    # scipy flags an event whose value is exactly 0 at t0; give it the sign
    # it takes just after the start instead
    def ev(t, y):
        if t == t0:
            return sgn * 1e-300
        return fun(t, y)
    return ev


def _real_rhs(ell, chart):
    def f(s, y):
        dp, dq = chart_rhs(ell, s, y[0], y[1], chart)
        return [dp, dq]
    return f


def _circle(ell, chart, centre, radius, start_phase, y0, tol, n=N_CIRCLE):
    """Integrate once around s = centre + radius e^{i phi} from phi = start_phase.

    Returns the OdeSolution in phi, the Taylor coefficients of (p, q) about
    ``centre`` from n equally spaced samples, and the samples themselves.
    """
    def f(phi, y):
        e = radius * np.exp(1j * phi)
        dp, dq = chart_rhs(ell, centre + e, y[0], y[1], chart)
        return [dp * 1j * e, dq * 1j * e]

    sol = solve_ivp(f, (start_phase, start_phase + TWO_PI), np.asarray(y0, dtype=complex),
                    method="DOP853", rtol=tol, atol=tol * 1e-2, dense_output=True)
    if sol.status != 0:
        raise IntegrationError("circle integration failed", reached=sol.t[-1])
    phis = start_phase + TWO_PI * np.arange(n) / n
    vals = sol.sol(phis)
    k = np.arange(n)
    # f(centre + r e^{i phi_k}) with phi_k = start + 2 pi k / n
    coef = np.fft.fft(vals, axis=1) / n
    coef = coef * np.exp(-1j * k * start_phase)[None, :] / radius ** k[None, :]
    nh = n // 2
    closure = np.max(np.abs(sol.y[:, -1] - sol.y[:, 0]) / (1.0 + np.abs(sol.y[:, 0])))
    z = radius * np.exp(1j * phis)
    ders = np.array(chart_rhs(ell, centre + z, vals[0], vals[1], chart))
    return _Circle(sol, coef[0, :nh], coef[1, :nh], z, vals, ders, closure)


@dataclass
class _Circle:
    sol: object
    cp: np.ndarray
    cq: np.ndarray
    z: np.ndarray
    vals: np.ndarray
    ders: np.ndarray
    closure: float


def _winding(values):
    ang = np.unwrap(np.angle(np.append(values, values[0])))
    return int(round((ang[-1] - ang[0]) / TWO_PI))


def _trim(c, radius, floor=1e-12):
    # drop the Taylor tail that sits below the integration noise
    mag = np.abs(c) * radius ** np.arange(len(c))
    keep = np.nonzero(mag > floor * mag.max())[0]
    return c[:keep[-1] + 1] if len(keep) else c[:1]


def _zeros_in_disc(z, v, dv, coeffs, radius):
    """Zeros of v inside |z| < radius from argument-principle moments.

    n is the contour integral of v'/v over 2 pi i.  The power sums
    sum z_j^k are means of z^{k+1} v'/v on the circle.  Newton's identities
    turn them into a degree-n polynomial whose roots are polished on the
    Taylor series.
    """
    g = z * dv / v
    n = int(round(np.mean(g).real))
    if n <= 0:
        return n, np.array([], dtype=complex)
    pk = [np.mean(z ** k * g) for k in range(1, n + 1)]
    e = [1.0 + 0j]
    for k in range(1, n + 1):
        e.append(sum((-1) ** (i - 1) * e[k - i] * pk[i - 1] for i in range(1, k + 1)) / k)
    roots = np.roots([(-1) ** k * e[k] for k in range(n + 1)])
    c = _trim(coeffs, radius)
    out = []
    for r0 in roots:
        x = r0
        for _ in range(20):
            f, df = _taylor(c, x), _taylor(c, x, 1)
            step = f / df
            x -= step
            if abs(step) < 1e-15 * radius:
                break
        out.append(x)
    return n, np.array(out)


def _taylor(c, z, der=0):
    if der == 0:
        return np.polyval(c[::-1], z)
    n = np.arange(len(c))
    return np.polyval((c[1:] * n[1:])[::-1], z)


def _classify(ell, chart, which, s0, cp, cq, z0, radius):
    """Local data at a real zero of the inverted coordinate ``which`` ('p' or 'q')."""
    ic, ia = CHARTS[chart]
    pv, qv = _taylor(cp, z0).real, _taylor(cq, z0).real
    dp, dq = _taylor(cp, z0, 1).real, _taylor(cq, z0, 1).real
    if which == "p":
        # chi = 1/u has a pole: zero-type
        a0 = _inv(qv) if ia else qv
        sign = 1 if a0 / s0 > 0 else -1
        residue = 1.0 / dp
        wprime = a0 * dp / (2.0 * s0)
        fit = max(abs(a0 - sign * s0), abs(residue - sign * 0.5), abs(wprime - 1.0))
        return SingularityEvent("zero-type", s0, sign, residue, a0, wprime, fit, radius)
    chi0 = _inv(pv) if ic else pv
    residue = 1.0 / dq
    sign = 1 if residue / s0 > 0 else -1
    wres = 1.0 / (2.0 * s0 * chi0 * dq)
    fit = max(abs(residue - sign * s0) / abs(s0), abs(chi0 + sign * 0.5), abs(wres + 1.0))
    return SingularityEvent("pole-type", s0, sign, residue, chi0, wres, fit, radius)


def _log_crossing(ell, piece_state, s1, radius, tol):
    """Circle fit of the w-residue at a chi = 0 crossing (standard or inverted-a chart)."""
    chart = piece_state.chart
    ia = CHARTS[chart][1]
    start = piece_state
    # start point is s1 - radius, i.e. phase pi
    circ = _circle(ell, chart, s1, radius, math.pi, [start.p, start.q], tol)
    cp, cq = circ.cp, circ.cq
    n, roots = _zeros_in_disc(circ.z, circ.vals[0], circ.ders[0], cp, radius)
    real = [z for z in roots if abs(z.imag) < 1e-7 * radius]
    if circ.closure > CLOSURE_TOL or n != len(roots) or not real:
        raise UnclassifiableSingularity("chi = 0 crossing not found on circle",
                                        dump={"s1": s1, "radius": radius, "winding": n,
                                              "closure": circ.closure})
    z0 = min(real, key=abs).real
    cp, cq = _trim(cp, radius), _trim(cq, radius)
    s_star = s1 + z0
    q0 = _taylor(cq, z0).real
    a0 = _inv(q0) if ia else q0
    dchi = _taylor(cp, z0, 1).real
    wres = a0 / (2.0 * s_star * dchi)
    return SingularityEvent("chi-zero", s_star, 1 if a0 > 0 else -1, wres, a0, wres,
                            abs(wres - 1.0), radius)


def integrate_leaf(state0, s_target, tol=LEAF_TOL, detour_rel=DETOUR_REL, log_crossings=True,
                   stop_at_crossing=False, stop_at_singularity=False, max_pieces=100000,
                   switch=SWITCH):
    """Integrate a leaf along the real s axis from state0.s to s_target.

    Chart changes are automatic.  Each real singularity is passed on a
    complex circle of radius detour_rel * |s| and logged with its local
    data; chi = 0 crossings are logged with the fitted w residue.  With
    ``stop_at_crossing`` the run ends at the first crossing after the start.
    """
    ell = state0.ell
    s, p, q, chart = float(np.real(state0.s)), float(np.real(state0.p)), float(np.real(state0.q)), state0.chart
    if s <= 0 or s_target <= 0:
        raise DomainError("real leaves are integrated on s > 0")
    chart = _leaving(chart, p, q, switch) if chart == STANDARD else chart
    p, q = _convert(state0.chart, p, q, chart)
    d = 1.0 if s_target >= s else -1.0
    events, pieces = [], []
    s_start = s
    while d * (s_target - s) > 0 and len(pieces) < max_pieces:
        ic, ia = CHARTS[chart]
        rhs = _real_rhs(ell, chart)
        evs, kinds = [], []

        def switch_p(t, y):
            return y[0] * y[0] - switch * switch

        def switch_q(t, y):
            return y[1] * y[1] - switch * switch
        for fn, name in ((switch_p, "switch"), (switch_q, "switch")):
            fn.terminal, fn.direction = True, 1
            evs.append(fn)
            kinds.append(name)
        for idx, inv in ((0, ic), (1, ia)):
            if inv:
                def sing(t, y, idx=idx):
                    r = detour_rel * abs(t)
                    return y[idx] + d * r * rhs(t, y)[idx]
                y0 = [p, q]
                g0 = sing(s, y0)
                sing = _skip_start(sing, s, math.copysign(1.0, g0) if g0 != 0 else 1.0)
                sing.terminal, sing.direction = True, 0
                evs.append(sing)
                kinds.append(("sing", idx))
        if not ic and (log_crossings or stop_at_crossing):
            v0 = rhs(s, [p, q])[0]
            cross = _skip_start(lambda t, y: y[0], s,
                                math.copysign(1.0, d * v0) if p == 0 else math.copysign(1.0, p))
            cross.terminal, cross.direction = stop_at_crossing, 0
            evs.append(cross)
            kinds.append("cross")
        sol = solve_ivp(rhs, (s, s_target), [p, q], method="DOP853", rtol=tol,
                        atol=tol * 1e-2, dense_output=True, events=evs)
        if sol.status < 0:
            return LeafResult(FoliationState(ell, s, p, q, chart), events, pieces, False,
                              f"integration failure: {sol.message}")
        s_end = sol.t[-1]
        pieces.append(_Piece(s, s_end, chart, sol.sol))
        crossings = []
        if "cross" in kinds:
            k = kinds.index("cross")
            crossings = [t for t in sol.t_events[k]
                         if abs(t - s_start) > 1e-12 * s_start and d * (t - s) >= 0 and d * (s_end - t) >= 0]
        for t in crossings:
            st = sol.sol(t)
            a_here = _inv(st[1]) if ia else st[1]
            if abs(a_here) <= 1e-10:
                continue  # on the divisor; see blowup_return
            r = detour_rel * t
            y_start = sol.sol(t - r) if min(s, s_end) <= t - r <= max(s, s_end) else None
            if y_start is None:
                # crossing very close to the start of the piece: fall back on a smaller circle
                r = 0.5 * abs(t - s) if t != s else 1e-8
                y_start = sol.sol(t - r)
            ev = _log_crossing(ell, FoliationState(ell, t - r, y_start[0], y_start[1], chart), t, r, tol)
            events.append(ev)
            if stop_at_crossing:
                fin = FoliationState(ell, ev.s0, 0.0, float(_inv(ev.value) if ia else ev.value), chart)
                return LeafResult(fin, events, pieces, True, "crossing")
        p, q = sol.y[0, -1], sol.y[1, -1]
        s = s_end
        if sol.status == 0:
            break
        fired = [i for i, te in enumerate(sol.t_events) if kinds[i] != "cross" and len(te)]
        if not fired:
            break
        i = fired[0]
        if kinds[i] == "switch":
            new = _leaving(chart, p, q, switch)
            if new == chart:
                # the event fired from inside the band: flip the coordinate that hit the threshold
                flags = list(CHARTS[chart])
                flags[0 if abs(p) >= abs(q) else 1] ^= True
                new = _BY_FLAGS[tuple(flags)]
            p, q = _convert(chart, p, q, new)
            chart = new
            continue
        idx = kinds[i][1]
        r = detour_rel * abs(s)
        centre = s + d * r
        start_phase = math.pi if d > 0 else 0.0
        circ = _circle(ell, chart, centre, r, start_phase, [p, q], tol)
        cp, cq = circ.cp, circ.cq
        wind = _winding(circ.vals[idx])
        n, roots = _zeros_in_disc(circ.z, circ.vals[idx], circ.ders[idx],
                                  cp if idx == 0 else cq, r)
        if circ.closure > CLOSURE_TOL or wind != n or n < 0:
            raise UnclassifiableSingularity(
                "local data around singularity is inconsistent",
                dump={"s": s, "centre": centre, "radius": r, "chart": chart,
                      "closure": circ.closure, "winding": wind, "moment_count": n,
                      "roots": roots.tolist(), "pieces": len(pieces), "events": events})
        cp, cq = _trim(cp, r), _trim(cq, r)
        stop = False
        for z0 in sorted(roots, key=lambda z: d * z.real):
            if abs(z0.imag) > 1e-7 * r:
                continue
            ev = _classify(ell, chart, "p" if idx == 0 else "q", centre + z0.real, cp, cq,
                           z0.real, r)
            events.append(ev)
            stop = stop or stop_at_singularity
        pieces.append(_Piece(s, centre + d * r, chart, None, centre, cp, cq))
        if d * (s_target - (centre + d * r)) <= 0 or stop:
            pc = pieces[-1]
            s_fin = s_target if d * (s_target - (centre + d * r)) <= 0 else centre + d * r
            p, q = pc.coords(s_fin)
            s = s_fin
            break
        y_mid = circ.sol.sol(start_phase + math.pi)
        if np.max(np.abs(y_mid.imag)) > 1e-6 * (1.0 + np.max(np.abs(y_mid.real))):
            raise UnclassifiableSingularity("leaf does not return to the real axis",
                                            dump={"s": centre + d * r, "value": y_mid})
        p, q = float(y_mid[0].real), float(y_mid[1].real)
        s = centre + d * r
        new = _leaving(chart, p, q, switch)
        p, q = _convert(chart, p, q, new)
        chart = new
        if stop:
            break
    return LeafResult(FoliationState(ell, s, p, q, chart), events, pieces, True, "target")


def integrate_path(state0, path, tol=LEAF_TOL):
    """Integrate along a polygonal path in the complex s plane (vertices after the start).

    The chart is re-selected at every vertex.
    """
    ell = state0.ell
    p, q, chart = complex(state0.p), complex(state0.q), state0.chart
    s = complex(state0.s)
    for s_next in path:
        s_next = complex(s_next)
        ds = s_next - s

        def f(t, y, s=s, ds=ds, chart=chart):
            dp, dq = chart_rhs(ell, s + t * ds, y[0], y[1], chart)
            return [dp * ds, dq * ds]

        def sw(t, y):
            return max(abs(y[0]), abs(y[1])) - 1.5 * SWITCH
        sw.terminal = True
        t = 0.0
        while t < 1.0:
            sol = solve_ivp(f, (t, 1.0), [p, q], method="DOP853", rtol=tol, atol=tol * 1e-2,
                            events=sw)
            if sol.status < 0:
                raise IntegrationError("complex path integration failed", reached=s + sol.t[-1] * ds)
            p, q = sol.y[0, -1], sol.y[1, -1]
            t = sol.t[-1]
            new = _leaving(chart, p, q)
            if t < 1.0 and new == chart:
                flags = list(CHARTS[chart])
                flags[0 if abs(p) >= abs(q) else 1] ^= True
                new = _BY_FLAGS[tuple(flags)]
            p, q = _convert(chart, p, q, new)
            chart = new

            def f(t, y, s=s, ds=ds, chart=chart):
                dp, dq = chart_rhs(ell, s + t * ds, y[0], y[1], chart)
                return [dp * ds, dq * ds]
        s = s_next
    return FoliationState(ell, s, p, q, chart)


@dataclass
class CircuitReport:
    start: FoliationState
    end: FoliationState
    error_identity: float
    error_sign_reversed: float

    @property
    def outcome(self):
        if self.error_identity < 1e-6:
            return "identity"
        if self.error_sign_reversed < 1e-6:
            return "sign-reversing"
        return "other"


def circuit_probe(state0, centre=0.0, n_seg=64, tol=LEAF_TOL):
    """Continue a leaf once around a circle through state0.s centred at ``centre``."""
    s0 = complex(state0.s)
    rad = s0 - centre
    path = [centre + rad * np.exp(1j * TWO_PI * k / n_seg) for k in range(1, n_seg + 1)]
    end = integrate_path(state0, path, tol)
    c0, a0 = complex(state0.chi), complex(state0.a)
    c1, a1 = complex(end.chi), complex(end.a)
    scale = 1.0 + abs(c0) + abs(a0)
    e_id = (abs(c1 - c0) + abs(a1 - a0)) / scale
    e_sr = (abs(c1 + c0) + abs(a1 + a0)) / scale
    return CircuitReport(state0, end, e_id, e_sr)


# -- Painleve 3 variable ---------------------------------------------------------------

@dataclass
class PainleveSample:
    s: float
    w: float
    kind: str


def painleve_w(state, events=(), tol=1e-9):
    """w = a / (2 s chi) with the local kind of the point."""
    if state.s == 0:
        raise DomainError("s = 0")
    for e in events:
        if abs(e.s0 - state.s) <= tol * max(1.0, abs(state.s)):
            w = {ZERO_UNIT: 0.0}.get(e.sample_kind, math.inf)
            return PainleveSample(state.s, w, e.sample_kind)
    chi, a = state.chi, state.a
    if chi == 0 and a == 0:
        raise OnDivisorError("w is 0/0 on the divisor chi = a = 0")
    if math.isinf(chi):
        return PainleveSample(state.s, 0.0, ZERO_UNIT)
    if math.isinf(a):
        return PainleveSample(state.s, math.inf, POLE_MINUS)
    if chi == 0:
        return PainleveSample(state.s, math.inf, POLE_PLUS)
    return PainleveSample(state.s, a / (2.0 * state.s * chi), REGULAR)


def w_and_derivative(ell, s, chi, a):
    """w and w' along a leaf (from the field at a regular point)."""
    st = FoliationState(ell, s, chi, a)
    dchi, da = foliation_rhs(st)
    w = a / (2.0 * s * chi)
    wp = da / (2.0 * s * chi) - a / (2.0 * s * s * chi) - a * dchi / (2.0 * s * chi * chi)
    return w, wp


def painleve_rhs(ell, s, w, wp):
    """w'' given by the Painleve 3 equation of the foliation."""
    return (wp * wp / w - wp / s - 2.0 * ell * w * w / s + (2.0 * ell - 2.0) / s
            + w ** 3 - 1.0 / w)


def painleve_residual(ell, s, w, wp, wpp):
    return wpp - painleve_rhs(ell, s, w, wp)


def riccati_residual(ell, s, w, wp):
    """Residual of the Bessel-type Riccati equation w' = (2 ell - 1) w / s - w^2 - 1."""
    return wp - ((2.0 * ell - 1.0) * w / s - w * w - 1.0)


def w_derivatives(ell, s, chi, a):
    """w, w', w'' at a regular point of a leaf, by the chain rule through the field.

    With psi = 2 s chi, w = a / psi and the second derivatives of (chi, a)
    come from chi'' = f_s + Df f.
    """
    f1, f2 = chart_rhs(ell, s, chi, a, STANDARD)
    J = rhs_jacobian(ell, chi, a, s)
    fs1 = -f1 / s
    fs2 = -2.0 * chi - (a / (s * s)) * (ell + 2.0 * chi * a)
    chi2 = fs1 + J[0, 0] * f1 + J[0, 1] * f2
    a2 = fs2 + J[1, 0] * f1 + J[1, 1] * f2
    psi, dpsi, ddpsi = 2.0 * s * chi, 2.0 * chi + 2.0 * s * f1, 4.0 * f1 + 2.0 * s * chi2
    w = a / psi
    wp = f2 / psi - a * dpsi / psi ** 2
    wpp = a2 / psi - 2.0 * f2 * dpsi / psi ** 2 - a * ddpsi / psi ** 2 + 2.0 * a * dpsi ** 2 / psi ** 3
    return w, wp, wpp


def bessel_type_w(ell, s):
    """w = (s^ell J_ell)' / (s^ell J_ell) = J_{ell-1}(s) / J_ell(s) with w', w''.

    Derivatives use J' = (J_{nu-1} - J_{nu+1}) / 2 and J'' from the Bessel
    equation; no Riccati or Painleve relation enters.
    """
    def jd(nu):
        j = bessel_j(nu, s)
        jp = bessel_jp(nu, s)
        jpp = -jp / s - (1.0 - nu * nu / (s * s)) * j
        return j, jp, jpp

    P, dP, ddP = jd(ell - 1)
    Q, dQ, ddQ = jd(ell)
    w = P / Q
    num = dP * Q - P * dQ
    wp = num / Q ** 2
    wpp = (ddP * Q - P * ddQ) / Q ** 2 - 2.0 * dQ * num / Q ** 3
    return w, wp, wpp


def leaf_painleve_residual(leaf, s_values, margin=0.05):
    """|P3 residual| of w along a stored leaf; points within ``margin`` of an event are nan."""
    ell = leaf.state.ell
    marks = np.array([e.s0 for e in leaf.events])
    out = np.full(len(s_values), np.nan)
    for i, s in enumerate(s_values):
        if len(marks) and np.min(np.abs(marks - s)) < margin:
            continue
        st = leaf.state_at(s)
        if math.isinf(st.chi) or math.isinf(st.a) or st.chi == 0:
            continue
        out[i] = abs(painleve_residual(ell, s, *w_derivatives(ell, s, st.chi, st.a)))
    return out


def energy_balance(leaf, s_values):
    """|H(s) - H(s_0) - int dH/ds ds| at each s of an increasing grid on a pole-free leg.

    The explicit s-derivative is integrated by cumulative Simpson quadrature.
    """
    states = [leaf.state_at(s) for s in s_values]
    H = np.array([hamiltonian(st) for st in states])
    dH = np.array([hamiltonian_ds(st) for st in states])
    integral = cumulative_simpson(dH, x=np.asarray(s_values), initial=0.0)
    return np.abs(H - H[0] - integral)


# -- Poincare map and its restriction to the divisor -------------------------------------

@dataclass
class ReturnResult:
    ell: float
    a0: float
    s0: float
    defined: bool
    a1: float = math.nan
    s1: float = math.nan
    crossing: SingularityEvent = None
    events: list = field(default_factory=list)
    reason: str = ""


def poincare_first_return(ell, a0, s0, tol=LEAF_TOL, s_max=None):
    """First return (a1, s1) of the leaf through (ell, 0, a0, s0) to chi = 0.

    Not defined (``defined=False``) if the leaf meets a singularity first or
    does not return before s_max.
    """
    if s0 <= 0:
        raise DomainError("s0 must be positive")
    if a0 == 0:
        raise OnDivisorError("a0 = 0 lies on the divisor; use blowup_return")
    if s_max is None:
        s_max = s0 + 50.0
    st = FoliationState.from_chi_a(ell, 0.0, a0, s0)
    leaf = integrate_leaf(st, s_max, tol, stop_at_crossing=True, stop_at_singularity=True)
    sing = leaf.singularities()
    if sing and (not leaf.crossings() or sing[0].s0 < leaf.crossings()[0].s0):
        return ReturnResult(ell, a0, s0, False, events=leaf.events,
                            reason=f"{sing[0].kind} singularity at s = {sing[0].s0:.12g}")
    if not leaf.crossings():
        return ReturnResult(ell, a0, s0, False, events=leaf.events,
                            reason=leaf.reason or "no return before s_max")
    c = leaf.crossings()[0]
    # refine on the dense output
    pc = leaf._piece(c.s0)
    s1 = c.s0
    for _ in range(8):
        p, qv = pc.coords(s1)
        dp = chart_rhs(ell, s1, p, qv, pc.chart)[0]
        step = p / dp
        s1 -= step
        if abs(step) < 1e-15 * s1:
            break
    p, qv = pc.coords(s1)
    a1 = _inv(qv) if CHARTS[pc.chart][1] else qv
    return ReturnResult(ell, a0, s0, True, float(a1), float(s1), c, leaf.events)


def poincare_preserves_rotation(ell, a0, s0, result, tol=1e-11):
    """(rho before, rho after) at the source and image of the map."""
    before = rotation_number(ScaledParams(ell, a0, s0), tol)
    after = rotation_number(ScaledParams(ell, result.a1, result.s1), tol)
    return before, after


@dataclass
class BlowupReturn:
    ell: float
    s0: float
    s1: float
    bessel_s1: float
    riccati_residual: float

    @property
    def discrepancy(self):
        return abs(self.s1 - self.bessel_s1)


def _blowup_rhs(ell):
    def f(s, y):
        return [-(ell / s) * y[0] + y[1] / (2.0 * s), -2.0 * s * y[0] + (ell / s) * y[1]]
    return f


def blowup_return(ell, s0, tol=1e-13, n_check=50):
    """Next zero s1 > s0 of y1 for the divisor system with y(s0) = (0, 1)."""
    if s0 <= 0:
        raise DomainError("s0 must be positive")
    f = _blowup_rhs(ell)
    ev = _skip_start(lambda t, y: y[0], s0, 1.0)
    ev.terminal, ev.direction = True, 0
    span = s0 + 10.0 * math.pi + 10.0
    sol = solve_ivp(f, (s0, span), [0.0, 1.0], method="DOP853", rtol=tol, atol=tol * 1e-2,
                    dense_output=True, events=ev)
    if not len(sol.t_events[0]):
        raise IntegrationError("no return of the divisor system", reached=sol.t[-1])
    s1 = sol.t_events[0][0]
    for _ in range(6):
        y = sol.sol(s1)
        s1 -= y[0] / f(s1, y)[0]
    # Riccati check on w = y2 / (2 s y1) inside the interval, away from its end poles
    margin = 0.05 * (s1 - s0)
    res = 0.0
    for s in np.linspace(s0 + margin, s1 - margin, n_check):
        y = sol.sol(s)
        dy = f(s, y)
        w = y[1] / (2.0 * s * y[0])
        wp = dy[1] / (2.0 * s * y[0]) - y[1] / (2.0 * s * s * y[0]) - y[1] * dy[0] / (2.0 * s * y[0] ** 2)
        res = max(res, abs(riccati_residual(ell, s, w, wp)) / (1.0 + w * w))
    return BlowupReturn(ell, s0, float(s1), next_zero_of_solution(ell, s0), res)


def flow_jacobian(ell, s_from, s_to, at, tol=1e-13):
    """Jacobian of the (chi, a) flow map s_from -> s_to in the standard chart."""
    chi0, a0 = at
    if s_to == s_from:
        return np.eye(2)

    def f(s, y):
        chi, a = y[0], y[1]
        dchi, da = chart_rhs(ell, s, chi, a, STANDARD)
        J = y[2:].reshape(2, 2)
        return np.concatenate([[dchi, da], (rhs_jacobian(ell, chi, a, s) @ J).ravel()])

    sol = solve_ivp(f, (s_from, s_to), np.array([chi0, a0, 1.0, 0.0, 0.0, 1.0]),
                    method="DOP853", rtol=tol, atol=tol * 1e-2)
    if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
        raise IntegrationError("variational integration failed", reached=sol.t[-1])
    return sol.y[2:, -1].reshape(2, 2)


def flow_map(ell, s_from, s_to, at, tol=1e-13):
    chi0, a0 = at
    sol = solve_ivp(_real_rhs(ell, STANDARD), (s_from, s_to), [chi0, a0], method="DOP853",
                    rtol=tol, atol=tol * 1e-2)
    if sol.status != 0:
        raise IntegrationError("flow integration failed", reached=sol.t[-1])
    return sol.y[:, -1]


# -- images of constriction curves ---------------------------------------------------------

@dataclass
class ImageRecord:
    a: float
    s: float
    a1: float
    s1: float
    curve_s: float
    distance: float
    residual: float
    deriv_residual: float


@dataclass
class ImageReport:
    ell: int
    k: int
    records: list

    @property
    def max_distance(self):
        return max(r.distance for r in self.records)

    @property
    def max_residual(self):
        return max(r.residual for r in self.records)

    def ok(self, dist_tol=1e-4, res_tol=1e-7):
        return self.max_distance < dist_tol and self.max_residual < res_tol


def constriction_image_check(ell, k, n=5, a_range=(1e-3, 5e-2), tol=LEAF_TOL):
    """Map n points of C_{ell,k} under the first-return map and compare with C_{ell,k+1}."""
    from .phaselock import identity_residual, solve_on_curve, trace_constriction_curve
    lo, hi = a_range
    src = trace_constriction_curve(ell, k, a_min=lo, a_max=hi * 1.05, certify=False)
    dst = trace_constriction_curve(ell, k + 1, a_min=lo, a_max=hi * 1.05, certify=False)
    records = []
    for a in np.geomspace(lo, hi, n):
        s = solve_on_curve(ell, a, float(np.interp(a, src.x, src.y)))
        ret = poincare_first_return(ell, a, s, tol)
        if not ret.defined:
            raise IntegrationError(f"first return not defined from C_{ell},{k} at a = {a}: {ret.reason}")
        aa = abs(ret.a1)
        guess = float(np.interp(aa, dst.x, dst.y)) if aa >= dst.x.min() else dst.y[np.argmin(dst.x)]
        s_curve = solve_on_curve(ell, aa, guess)
        res, dres = identity_residual(ell, ell, ret.a1, ret.s1)
        records.append(ImageRecord(a, s, ret.a1, ret.s1, s_curve, abs(ret.s1 - s_curve), res, dres))
    return ImageReport(ell, k, records)
