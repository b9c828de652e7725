"""The torus flow  dtheta/dtau = a cos(theta) + ell + s cos(tau).

Parameters come in two charts: physical (B, A; omega) and scaled
(ell, a, s) = (B/omega, 1/omega, A/omega).  Angles are tracked on the real
line (the lift); the period-2pi map ``h`` is always returned as a lift value.
"""

from dataclasses import dataclass
import math
from typing import NamedTuple

import numpy as np

from . import _rk
from .bessel import bessel_j
from .errors import DomainError, IntegrationError

TWO_PI = 2.0 * math.pi
DEFAULT_TOL = 1e-11
LOCK_TOL = 1e-9


class ScaledParams(NamedTuple):
    """(ell, a, s); unlike ModelParams this admits a = 0 (omega = infinity)."""

    ell: float
    a: float
    s: float


@dataclass(frozen=True)
class ModelParams:
    B: float
    A: float
    omega: float

    def __post_init__(self):
        if not self.omega > 0.0:
            raise DomainError(f"omega must be positive, got {self.omega}")

    @property
    def ell(self):
        return self.B / self.omega

    @property
    def a(self):
        return 1.0 / self.omega

    @property
    def s(self):
        return self.A / self.omega

    @property
    def scaled(self):
        return ScaledParams(self.ell, self.a, self.s)

    @classmethod
    def from_scaled(cls, ell, a, s):
        B, A, omega = to_physical((ell, a, s))
        return cls(B, A, omega)


def to_scaled(params):
    """(B, A, omega) -> (ell, a, s)."""
    B, A, omega = params
    if not omega > 0.0:
        raise DomainError(f"omega must be positive, got {omega}")
    return ScaledParams(B / omega, 1.0 / omega, A / omega)


def to_physical(scaled):
    """(ell, a, s) -> (B, A, omega); needs a > 0."""
    ell, a, s = scaled
    if not a > 0.0:
        raise DomainError(f"a must be positive, got {a}")
    omega = 1.0 / a
    return ell * omega, s * omega, omega


def scaled_of(params):
    if isinstance(params, ModelParams):
        return params.scaled
    if isinstance(params, ScaledParams):
        return params
    return ScaledParams(*map(float, params))


def _parr(params):
    return np.array(scaled_of(params), dtype=float)


def _tols(tol):
    if not tol > 0.0:
        raise DomainError("tol must be positive")
    return tol, 0.1 * tol


def vector_field(theta, tau, ell, a, s):
    return a * np.cos(theta) + ell + s * np.cos(tau)


def flow_lift(theta0, tau0, tau1, params, tol=DEFAULT_TOL):
    """theta(tau1) for the lifted solution with theta(tau0) = theta0."""
    rtol, atol = _tols(tol)
    p = _parr(params)
    th = np.asarray(theta0, dtype=float)
    if th.ndim == 0:
        val, reached, status = _rk.torus_lift(float(th), float(tau0), float(tau1), p,
                                              rtol, atol, _rk.TABLEAU)
        if status != _rk.OK:
            raise IntegrationError(f"torus flow integration failed (status {status})",
                                   reached=reached)
        return float(val)
    out, status = _rk.torus_lift_many(np.ascontiguousarray(th.ravel()), float(tau0),
                                      float(tau1), p, rtol, atol, _rk.TABLEAU)
    if status != _rk.OK:
        raise IntegrationError(f"torus flow integration failed (status {status})")
    return out.reshape(th.shape)


def circle_map(params, theta0, tol=DEFAULT_TOL):
    """Lift of the period map h at theta0 (scalar or array)."""
    return flow_lift(theta0, 0.0, TWO_PI, params, tol)


def dh_da_at_a0(ell, s, theta0):
    """dh/da at a = 0:  2 pi cos(theta0) J_ell(-s)  (ell integer)."""
    if ell != round(ell):
        raise DomainError("closed form needs integer ell")
    return TWO_PI * np.cos(theta0) * bessel_j(int(round(ell)), -s)


@dataclass
class CircleMapProbe:
    theta0: np.ndarray
    lift_h: np.ndarray
    dh_dtheta: np.ndarray
    dh_da: np.ndarray
    dh_ds: np.ndarray
    dh_dell: np.ndarray
    d2h_dads: np.ndarray
    tol: float


def variational_probe(params, theta0, tol=DEFAULT_TOL):
    """h and its first derivatives (plus d2h/da ds) from the variational system."""
    rtol, atol = _tols(tol)
    p = _parr(params)
    th = np.atleast_1d(np.asarray(theta0, dtype=float))
    rows = np.empty((th.size, 6))
    for k, t0 in enumerate(th):
        y, reached, status = _rk.torus_variational(float(t0), 0.0, TWO_PI, p, rtol, atol,
                                                   _rk.TABLEAU)
        if status != _rk.OK:
            raise IntegrationError("variational integration failed", reached=reached)
        rows[k] = y
    return CircleMapProbe(th, rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], rows[:, 4],
                          rows[:, 5], tol)


def finite_difference_probe(params, theta0, eps=1e-5, tol=1e-13):
    """Central differences of h in (theta0, a, s, ell); an oracle for variational_probe."""
    ell, a, s = scaled_of(params)
    th = np.atleast_1d(np.asarray(theta0, dtype=float))

    def h(e, aa, ss, t):
        return circle_map(ScaledParams(e, aa, ss), t, tol)

    def cd(f):
        return (f(eps) - f(-eps)) / (2.0 * eps)

    return {
        "dh_dtheta": cd(lambda d: h(ell, a, s, th + d)),
        "dh_da": cd(lambda d: h(ell, a + d, s, th)),
        "dh_ds": cd(lambda d: h(ell, a, s + d, th)),
        "dh_dell": cd(lambda d: h(ell + d, a, s, th)),
    }


@dataclass
class RotationResult:
    rho: float
    locked: bool
    lock_integer: int
    residual: float
    iterations: int
    bracket: tuple = (math.nan, math.nan)
    fixed_point: float = math.nan


def _newton_fixed(p, m, lo, hi, x0, rtol, atol, max_iter=60):
    """Root of G(x) = h(x) - x - 2 pi m, safeguarded by a bracket [lo, hi]."""
    shift = TWO_PI * m
    x = x0
    evals = 0
    g = math.nan
    bracketed = lo is not None
    for _ in range(max_iter):
        y, _, status = _rk.torus_variational(x, 0.0, TWO_PI, p, rtol, atol, _rk.TABLEAU)
        evals += 1
        if status != _rk.OK:
            return None, math.inf, evals
        g = y[0] - x - shift
        dg = y[1] - 1.0
        if abs(g) < 0.05 * LOCK_TOL:
            return x, abs(g), evals
        if bracketed:
            if g < 0.0:
                lo = x
            else:
                hi = x
        xn = x - g / dg if dg != 0.0 else math.nan
        if bracketed:
            inside = math.isfinite(xn) and min(lo, hi) < xn < max(lo, hi)
            if not inside:
                xn = 0.5 * (lo + hi)
            if abs(hi - lo) < 1e-15:
                return x, abs(g), evals
        elif not math.isfinite(xn) or abs(xn - x) > math.pi:
            return x, abs(g), evals
        x = xn
    return x, abs(g), evals


def rotation_number(params, tol=DEFAULT_TOL, max_periods=200, n_samples=16):
    """Rotation number of the torus flow, with integer-lock detection.

    First the displacement h(x) - x is sampled; for every integer m inside
    its sampled range a root of h(x) - x - 2 pi m is sought by safeguarded
    Newton.  A root with residual below LOCK_TOL means rho = m exactly.
    Otherwise rho is estimated by iterating the lift from two seeds; each
    orbit of length K brackets rho to width 2/K.
    """
    rtol, atol = _tols(tol)
    p = _parr(params)
    theta = np.linspace(0.0, TWO_PI, n_samples, endpoint=False)
    hv, status = _rk.torus_lift_many(theta, 0.0, TWO_PI, p, rtol, atol, _rk.TABLEAU)
    if status != _rk.OK:
        raise IntegrationError("torus flow integration failed")
    disp = hv - theta
    iterations = n_samples
    lo_s, hi_s = disp.min() / TWO_PI, disp.max() / TWO_PI
    candidates = list(range(math.floor(lo_s), math.ceil(hi_s) + 1))
    mid = 0.5 * (lo_s + hi_s)
    candidates.sort(key=lambda m: abs(m - mid))
    best_res = math.inf
    for m in candidates:
        g = disp - TWO_PI * m
        sign_change = np.nonzero(np.sign(g) != np.sign(np.roll(g, -1)))[0]
        if sign_change.size:
            i = int(sign_change[0])
            lo = theta[i]
            hi = theta[i + 1] if i + 1 < n_samples else TWO_PI
            # orient so that G(lo) < 0 < G(hi)
            if g[i] > 0.0:
                lo, hi = hi, lo
            x0 = theta[i] - g[i] * (hi - lo) / (g[(i + 1) % n_samples] - g[i]) \
                if g[i] < 0.0 else theta[i]
            x, res, ev = _newton_fixed(p, m, lo, hi, float(x0), rtol, atol)
        else:
            i = int(np.argmin(np.abs(g)))
            x, res, ev = _newton_fixed(p, m, None, None, float(theta[i]), rtol, atol)
        iterations += ev
        best_res = min(best_res, res)
        if x is not None and res < LOCK_TOL:
            return RotationResult(float(m), True, m, res, iterations, (float(m), float(m)),
                                  float(x % TWO_PI))
    estimates = []
    brackets = []
    for seed in (0.0, math.pi):
        orbit, st = _rk.torus_iterate(seed, max_periods, p, rtol, atol, _rk.TABLEAU)
        if st != _rk.OK:
            raise IntegrationError("torus flow integration failed while iterating")
        iterations += max_periods
        k = orbit.size - 1
        d = (orbit[-1] - orbit[0]) / TWO_PI
        estimates.append(d / k)
        brackets.append(((d - 1.0) / k, (d + 1.0) / k))
    lo_b = max(b[0] for b in brackets)
    hi_b = min(b[1] for b in brackets)
    if lo_b > hi_b:
        raise IntegrationError("rotation number brackets from two seeds are disjoint")
    rho = 0.5 * (estimates[0] + estimates[1])
    return RotationResult(float(rho), False, None, float(best_res), iterations,
                          (float(lo_b), float(hi_b)))
