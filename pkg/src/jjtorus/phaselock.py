"""Phase-lock area boundaries, constrictions and constriction curves.

A boundary point of L_r is a parameter value whose period map has the lifted
fixed point h(alpha) = alpha + 2 pi r with alpha in {0, pi}; for fixed (A,
omega) the left side is strictly increasing in B, so each boundary is the
graph B = G_{r,alpha}(A).  A constriction is a value with A != 0 where both
boundaries meet; there h is the identity (plus the integer shift).
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import brentq

from . import _rk
from .bessel import bessel_j, bessel_zeros
from .dynamics import (DEFAULT_TOL, TWO_PI, ModelParams, ScaledParams, _tols,
                       circle_map, rotation_number)
from .errors import ConvergenceError, DomainError, NotFoundError

BOUNDARY_TOL = 1e-9
CONSTRICTION_TOL = 1e-8
DERIV_TOL = 1e-6
VERTICAL_TOL = 1e-7
N_CERT = 16


@dataclass
class BoundaryPoint:
    r: int
    alpha: float
    A: float
    omega: float
    B: float
    residual: float


@dataclass
class ConstrictionPoint:
    """Certified constriction; (B, A, omega) are the solved physical values."""

    ell: int
    B: float
    A: float
    omega: float
    residual: float
    deriv_residual: float = math.nan

    @property
    def a(self):
        return 1.0 / self.omega

    @property
    def s(self):
        return self.A / self.omega

    @property
    def vertical_offset(self):
        return abs(self.B - self.ell * self.omega)


@dataclass
class PlanarCurve:
    x: np.ndarray
    y: np.ndarray
    residual: np.ndarray
    plane: str
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.x)

    @property
    def vertices(self):
        return np.column_stack([self.x, self.y])


def _var(ell, a, s, theta, tol):
    rtol, atol = _tols(tol)
    y, reached, status = _rk.torus_variational(float(theta), 0.0, TWO_PI,
                                               np.array([ell, a, s], dtype=float),
                                               rtol, atol, _rk.TABLEAU)
    if status != _rk.OK:
        raise ConvergenceError("variational integration failed", last=(ell, a, s))
    return y


def _check_alpha(alpha):
    if not (alpha == 0.0 or abs(alpha - math.pi) < 1e-15):
        raise DomainError("alpha must be 0 or pi")
    return 0.0 if alpha == 0.0 else math.pi


def boundary_B(r, alpha, A, omega, B_guess=None, tol=DEFAULT_TOL, max_iter=60):
    """G_{r,alpha}(A): the B solving lift h(alpha) = alpha + 2 pi r.

    Newton in B with the variational derivative dh/dell / omega, guarded by
    the bracket that the monotonicity of h in B provides.
    """
    if not omega > 0.0:
        raise DomainError("omega must be positive")
    alpha = _check_alpha(alpha)
    a, s = 1.0 / omega, A / omega
    target = alpha + TWO_PI * r
    B = r * omega if B_guess is None else float(B_guess)
    lo = hi = None
    step_cap = 2.0 + abs(A)
    f = math.nan
    for _ in range(max_iter):
        y = _var(B / omega, a, s, alpha, tol)
        f = y[0] - target
        if abs(f) < 0.05 * BOUNDARY_TOL:
            return BoundaryPoint(r, alpha, A, omega, B, abs(f))
        if f < 0.0:
            lo = B if lo is None else max(lo, B)
        else:
            hi = B if hi is None else min(hi, B)
        df = y[4] / omega
        Bn = B - f / df if df > 0.0 else math.nan
        if lo is not None and hi is not None:
            if not (lo < Bn < hi):
                Bn = 0.5 * (lo + hi)
            if hi - lo < 1e-15 * max(1.0, abs(B)):
                break
        elif not math.isfinite(Bn) or abs(Bn - B) > step_cap:
            Bn = B + math.copysign(step_cap, -f)
        B = Bn
    if abs(f) < BOUNDARY_TOL:
        return BoundaryPoint(r, alpha, A, omega, B, abs(f))
    raise ConvergenceError(f"boundary Newton did not converge (|F| = {abs(f):.2e})", last=B)


def _boundary_slope(r, alpha, pt, tol):
    # implicit-function slope dB/dA of the boundary at a solved point
    y = _var(pt.B / pt.omega, 1.0 / pt.omega, pt.A / pt.omega, alpha, tol)
    return -y[3] / y[4]


def boundary_curve(r, alpha, omega, A_from, A_to, n, tol=DEFAULT_TOL, min_step=1e-6):
    """Boundary graph B = G_{r,alpha}(A) sampled at n equally spaced A values.

    Tangent predictor plus Newton corrector; a failed correction halves the
    step until ``min_step``.
    """
    if n < 2:
        raise DomainError("n must be >= 2")
    alpha = _check_alpha(alpha)
    As = np.linspace(A_from, A_to, n)
    Bs = np.empty(n)
    res = np.empty(n)
    guess = None
    if abs(As[0]) < 1e-12 and r != 0:
        guess = math.sqrt(r * r * omega * omega + 1.0)
    pt = boundary_B(r, alpha, As[0], omega, guess, tol)
    Bs[0], res[0] = pt.B, pt.residual
    for k in range(1, n):
        A_cur, target = pt.A, As[k]
        h = target - A_cur
        while True:
            step = min(abs(h), abs(target - A_cur))
            A_next = A_cur + math.copysign(step, target - A_cur)
            pred = pt.B + _boundary_slope(r, alpha, pt, tol) * (A_next - A_cur)
            try:
                new = boundary_B(r, alpha, A_next, omega, pred, tol, max_iter=12)
            except ConvergenceError:
                h = 0.5 * step
                if h < min_step:
                    raise ConvergenceError(f"continuation stalled at A = {A_cur}", last=pt)
                continue
            pt, A_cur = new, A_next
            if A_cur == target:
                break
        Bs[k], res[k] = pt.B, pt.residual
    return PlanarCurve(As, Bs, res, "A,B", {"r": r, "alpha": alpha, "omega": omega})


@dataclass
class AsymptoticsResidual:
    r: int
    omega: float
    A: float
    residual_0: float
    residual_pi: float

    @property
    def residual(self):
        return max(self.residual_0, self.residual_pi)


def bessel_asymptotics_residual(r, omega, A, tol=DEFAULT_TOL, check_domain=True):
    """Distance of both boundaries from r omega -/+ J_r(-A/omega).

    The domain check A >= max(10 omega, 5 (|r| omega + 1)**2 / omega) can be
    turned off to probe smaller A.
    """
    if check_domain:
        need = max(10.0 * omega, 5.0 * (abs(r) * omega + 1.0) ** 2 / omega)
        if A < need:
            raise DomainError(f"A = {A} below asymptotic regime A >= {need}")
    j = bessel_j(r, -A / omega)
    g0 = boundary_B(r, 0.0, A, omega, r * omega - j, tol)
    gp = boundary_B(r, math.pi, A, omega, r * omega + j, tol)
    return AsymptoticsResidual(r, omega, A, abs(g0.B - r * omega + j),
                               abs(gp.B - r * omega - j))


def boundary_gap(ell, omega, A, guesses=None, tol=DEFAULT_TOL):
    """d(A) = G_{ell,pi}(A) - G_{ell,0}(A), with the two boundary points."""
    g0 = boundary_B(ell, 0.0, A, omega, None if guesses is None else guesses[0], tol)
    gp = boundary_B(ell, math.pi, A, omega, None if guesses is None else guesses[1], tol)
    return gp.B - g0.B, g0, gp


def identity_residual(m, ell, a, s, n=N_CERT, tol=DEFAULT_TOL):
    """max |h(x) - x - 2 pi m| and max |h'(x) - 1| over n equally spaced x.

    ``m`` is the integer shift and (ell, a, s) the scaled parameters.
    """
    rtol, atol = _tols(tol)
    p = np.array([ell, a, s], dtype=float)
    res = dres = 0.0
    for x in np.linspace(0.0, TWO_PI, n, endpoint=False):
        y, _, status = _rk.torus_variational(float(x), 0.0, TWO_PI, p, rtol, atol, _rk.TABLEAU)
        if status != _rk.OK:
            return math.inf, math.inf
        res = max(res, abs(y[0] - x - TWO_PI * m))
        dres = max(dres, abs(y[1] - 1.0))
    return res, dres


class JointFixedPointNotIdentity(RuntimeError):
    """Fixed points at 0 and pi were found but h is not the identity."""

    def __init__(self, message, point):
        super().__init__(message)
        self.point = point


def _joint_newton(ell, omega, B, A, tol, max_iter=30):
    target0, targetp = TWO_PI * ell, math.pi + TWO_PI * ell
    for _ in range(max_iter):
        a, s = 1.0 / omega, A / omega
        y0 = _var(B / omega, a, s, 0.0, tol)
        yp = _var(B / omega, a, s, math.pi, tol)
        F = np.array([y0[0] - target0, yp[0] - targetp])
        if np.max(np.abs(F)) < 1e-12:
            return B, A, F
        J = np.array([[y0[4], y0[3]], [yp[4], yp[3]]]) / omega
        try:
            dB, dA = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian in constriction Newton", last=(B, A))
        B, A = B + dB, A + dA
        if abs(dB) + abs(dA) < 1e-14 * (1.0 + abs(A)):
            return B, A, F
    raise ConvergenceError("constriction Newton did not converge", last=(B, A))


def find_constriction(ell, omega, s_bracket, tol=DEFAULT_TOL):
    """Constriction of L_ell on the segment s = A/omega in ``s_bracket``.

    The boundary gap d(A) is bracketed and zeroed, then (B, A) is polished by
    2D Newton on the two fixed-point equations, and the result is certified
    as h = Id at N_CERT angles.
    """
    s_lo, s_hi = s_bracket
    A_lo, A_hi = s_lo * omega, s_hi * omega
    d_lo = boundary_gap(ell, omega, A_lo, tol=tol)[0]
    d_hi = boundary_gap(ell, omega, A_hi, tol=tol)[0]
    if d_lo == 0.0:
        A0 = A_lo
    elif d_hi == 0.0:
        A0 = A_hi
    elif d_lo * d_hi > 0.0:
        raise NotFoundError(f"no sign change of the boundary gap on A in [{A_lo}, {A_hi}]")
    else:
        A0 = brentq(lambda A: boundary_gap(ell, omega, A, tol=tol)[0], A_lo, A_hi,
                    xtol=1e-10)
    g0 = boundary_B(ell, 0.0, A0, omega, tol=tol)
    B, A, _ = _joint_newton(ell, omega, g0.B, A0, tol)
    return certify_constriction(ell, B, A, omega, tol)


def certify_constriction(ell, B, A, omega, tol=DEFAULT_TOL):
    if A == 0.0:
        raise DomainError("A = 0 is a growth point, not a constriction")
    res, dres = identity_residual(ell, B / omega, 1.0 / omega, A / omega, tol=tol)
    point = ConstrictionPoint(int(ell), float(B), float(A), float(omega), res, dres)
    if res >= CONSTRICTION_TOL or dres >= DERIV_TOL:
        raise JointFixedPointNotIdentity(
            f"joint fixed point but h != Id (residual {res:.2e}, |h'-1| {dres:.2e})", point)
    if abs(B - ell * omega) >= VERTICAL_TOL:
        raise JointFixedPointNotIdentity(
            f"constriction off the vertical line: |B - ell omega| = {abs(B - ell * omega):.2e}",
            point)
    return point


def gap_sweep(ell, omega, A_values, tol=DEFAULT_TOL):
    """Boundary gap d(A) on an increasing grid, reusing boundary values as guesses."""
    out = np.empty(len(A_values))
    guesses = None
    for k, A in enumerate(A_values):
        d, g0, gp = boundary_gap(ell, omega, A, guesses, tol)
        out[k] = d
        guesses = (g0.B, gp.B)
    return out


def _sweep_grid(omega, A_upper, ds):
    n = max(2, int(math.ceil(A_upper / (ds * omega))) + 1)
    return np.linspace(A_upper / n, A_upper, n)


def find_constrictions(ell, omega, A_upper, ds=0.1, tol=DEFAULT_TOL):
    """All constrictions of L_ell with 0 < A <= A_upper from a sign-change sweep."""
    grid = _sweep_grid(omega, A_upper, ds)
    d = gap_sweep(ell, omega, grid, tol)
    found = []
    for k in np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]:
        found.append(find_constriction(ell, omega, (grid[k] / omega, grid[k + 1] / omega), tol))
    return found


def count_constrictions_below(ell, omega, A_upper, ds=0.1, tol=DEFAULT_TOL):
    """Number of sign changes of d(A) on (0, A_upper); ds is the grid step in s."""
    if not A_upper > 0.0:
        raise DomainError("A_upper must be positive")
    grid = _sweep_grid(omega, A_upper, ds)
    d = gap_sweep(ell, omega, grid, tol)
    return int(np.count_nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0))


# -- constriction curves in the (a, s) plane -------------------------------------------

def _xi(ell, a, s, tol):
    """Scaled displacements (h(x) - x - 2 pi ell)/a at x = 0, pi and their gradients."""
    rows = []
    grads = []
    for x in (0.0, math.pi):
        y = _var(ell, a, s, x, tol)
        delta = y[0] - x - TWO_PI * ell
        rows.append(delta / a)
        grads.append((y[2] / a - delta / (a * a), y[3] / a))
    return np.array(rows), np.array(grads)


def _correct(ell, x_pred, tangent, tol, max_iter=8, ftol=1e-11):
    """Gauss-Newton on (xi_0, xi_pi, tangent . (x - x_pred)) = 0."""
    x = x_pred.copy()
    for it in range(max_iter):
        if x[0] <= 0.0:
            return None
        F, G = _xi(ell, x[0], x[1], tol)
        r = np.array([F[0], F[1], tangent @ (x - x_pred)])
        J = np.vstack([G, tangent])
        dx = np.linalg.lstsq(J, -r, rcond=None)[0]
        x = x + dx
        if np.linalg.norm(dx) < 1e-13 * (1.0 + np.linalg.norm(x)) or (
                max(abs(F[0]), abs(F[1])) < ftol and np.linalg.norm(dx) < 1e-10):
            F, G = _xi(ell, x[0], x[1], tol)
            if max(abs(F[0]), abs(F[1])) < 1e-9:
                return x, F, G
    return None


def _tangent(G, prev):
    # null direction of the (consistent) rank-one Jacobian, oriented like prev
    g = G[0] if np.linalg.norm(G[0]) >= np.linalg.norm(G[1]) else G[1]
    t = np.array([-g[1], g[0]])
    t /= np.linalg.norm(t)
    return t if t @ prev >= 0.0 else -t


def _seed(ell, k, a0, tol):
    s = bessel_zeros(ell, k)[k]
    for _ in range(40):
        F, G = _xi(ell, a0, s, tol)
        # both equations share the root; use the better-conditioned one
        i = int(np.argmax(np.abs(G[:, 1])))
        ds = -F[i] / G[i, 1]
        s += ds
        if abs(ds) < 1e-12 * s:
            break
    else:
        raise ConvergenceError("could not seed constriction curve", last=(a0, s))
    return np.array([a0, s])


def trace_constriction_curve(ell, k, a_min=0.01, a_max=1.0, step=0.02, min_step=1e-5,
                             max_step=0.05, tol=DEFAULT_TOL, max_vertices=5000,
                             certify=True):
    """Pseudo-arclength continuation of C_{ell,k} from a = a_min to a = a_max.

    Seeded near (a_min, s_{ell,k}); every vertex is certified h = Id at
    N_CERT angles when ``certify`` is set.
    """
    if not 0.0 < a_min <= 0.2:
        raise DomainError("a_min must lie in (0, 0.2]")
    if a_max <= a_min:
        raise DomainError("a_max must exceed a_min")
    x = _seed(ell, k, a_min, tol)
    F, G = _xi(ell, x[0], x[1], tol)
    t = _tangent(G, np.array([1.0, 0.0]))
    pts = [x]
    tans = [t]
    h = step
    while x[0] < a_max and len(pts) < max_vertices:
        hh = h
        if x[0] + hh * t[0] > a_max and t[0] > 0:
            hh = (a_max - x[0]) / t[0]
        out = _correct(ell, x + hh * t, t, tol)
        if out is None:
            h *= 0.5
            if h < min_step:
                raise ConvergenceError(f"continuation stalled at (a, s) = {tuple(x)}", last=x)
            continue
        xn, F, G = out
        t = _tangent(G, t)
        x = xn
        pts.append(x)
        tans.append(t)
        h = min(max_step, 1.25 * h) if hh == h else h
    pts = np.array(pts)
    tans = np.array(tans)
    res = np.empty(len(pts))
    dres = np.empty(len(pts))
    for i, (a, s) in enumerate(pts):
        if certify:
            res[i], dres[i] = identity_residual(ell, ell, a, s, tol=tol)
        else:
            res[i] = dres[i] = math.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = tans[:, 1] / tans[:, 0]
    return PlanarCurve(pts[:, 0], pts[:, 1], res, "a,s",
                       {"ell": ell, "k": k, "seed_zero": bessel_zeros(ell, k)[k],
                        "slope": slope, "deriv_residual": dres, "tol": tol})


def landing_intercept(curve, n_fit=8):
    """Quadratic fit s(a) through the n_fit smallest-a vertices, evaluated at a = 0."""
    order = np.argsort(curve.x)[:n_fit]
    coef = np.polyfit(curve.x[order], curve.y[order], 2)
    return float(np.polyval(coef, 0.0)), coef


def curve_slope_at(curve, a):
    """ds/da of a traced curve at abscissa a (linear interpolation of vertex tangents)."""
    order = np.argsort(curve.x)
    return float(np.interp(a, curve.x[order], curve.meta["slope"][order]))


def solve_on_curve(ell, a, s_guess, tol=DEFAULT_TOL):
    """The s with (a, s) on a constriction curve, by Newton from s_guess."""
    s = s_guess
    for _ in range(40):
        F, G = _xi(ell, a, s, tol)
        i = int(np.argmax(np.abs(G[:, 1])))
        ds = -F[i] / G[i, 1]
        s += ds
        if abs(ds) < 1e-12 * max(1.0, s):
            return s
    raise ConvergenceError("no constriction-curve point near guess", last=s)


def paired_alpha(r, alpha):
    """alpha' with G_{-r,alpha'}(A) = -G_{r,alpha}(A) under B -> -B."""
    return _check_alpha((alpha + math.pi * (r % 2 == 0)) % TWO_PI)


def positivity_probe(point, eps=1e-3, tol=DEFAULT_TOL):
    """Rotation results at (ell omega, A -/+ eps): both should be locked at ell."""
    omega = point.omega
    return [rotation_number(ModelParams(point.ell * omega, point.A + d, omega), tol)
            for d in (-eps, eps)]
