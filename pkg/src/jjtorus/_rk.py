"""Jitted DOP853 integrator for the torus flow and its variational system.

The Butcher tableau and error weights are the Hairer--Wanner DOP853 tables as
shipped by scipy; only the stepping loop lives here, so that the inner loop of
rotation-number scans runs without Python overhead.
"""

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

N_STAGES = _dop.N_STAGES
# passed explicitly to every jitted routine so numba can cache them on disk
TABLEAU = (
    np.ascontiguousarray(_dop.A[:N_STAGES, :N_STAGES]),
    np.ascontiguousarray(_dop.B),
    np.ascontiguousarray(_dop.C[:N_STAGES]),
    np.ascontiguousarray(_dop.E3),
    np.ascontiguousarray(_dop.E5),
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
MAX_STEPS = 2_000_000

# status codes returned alongside the state
OK = 0
STEP_UNDERFLOW = 1
TOO_MANY_STEPS = 2


@njit(cache=True)
def _torus_rhs(tau, y, p, out):
    # p = (ell, a, s)
    out[0] = p[1] * np.cos(y[0]) + p[0] + p[2] * np.cos(tau)


@njit(cache=True)
def _torus_var_rhs(tau, y, p, out):
    # y = (theta, d/dtheta0, d/da, d/ds, d/dell, d2/da ds)
    ell, a, s = p[0], p[1], p[2]
    c = np.cos(y[0])
    sn = np.sin(y[0])
    ct = np.cos(tau)
    out[0] = a * c + ell + s * ct
    out[1] = -a * sn * y[1]
    out[2] = c - a * sn * y[2]
    out[3] = ct - a * sn * y[3]
    out[4] = 1.0 - a * sn * y[4]
    out[5] = -sn * y[3] - a * c * y[2] * y[3] - a * sn * y[5]


TORUS = 0
TORUS_VAR = 1


@njit(cache=True)
def _rhs(kind, tau, y, p, out):
    if kind == TORUS:
        _torus_rhs(tau, y, p, out)
    else:
        _torus_var_rhs(tau, y, p, out)


@njit(cache=True)
def _integrate(kind, t0, t1, y0, p, rtol, atol, h0, tab):
    """Advance ``y0`` from ``t0`` to ``t1`` (t1 > t0 or t1 < t0).

    Returns (y, t_reached, status, n_steps).
    """
    A, B, C, E3, E5 = tab
    n = y0.shape[0]
    y = y0.copy()
    t = t0
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    if span == 0.0:
        return y, t, OK, 0
    K = np.empty((N_STAGES + 1, n))
    ytmp = np.empty(n)
    ynew = np.empty(n)
    fnew = np.empty(n)
    _rhs(kind, t, y, p, K[0])
    h = min(abs(h0), span)
    steps = 0
    min_h = 1e-14 * max(1.0, abs(t0), abs(t1))
    while direction * (t1 - t) > 0.0:
        if steps >= MAX_STEPS:
            return y, t, TOO_MANY_STEPS, steps
        if h < min_h:
            return y, t, STEP_UNDERFLOW, steps
        remaining = abs(t1 - t)
        last = False
        if h >= remaining:
            h = remaining
            last = True
        hs = direction * h
        for s in range(1, N_STAGES):
            for i in range(n):
                acc = 0.0
                for j in range(s):
                    acc += A[s, j] * K[j, i]
                ytmp[i] = y[i] + hs * acc
            _rhs(kind, t + C[s] * hs, ytmp, p, K[s])
        for i in range(n):
            acc = 0.0
            for j in range(N_STAGES):
                acc += B[j] * K[j, i]
            ynew[i] = y[i] + hs * acc
        tnew = t1 if last else t + hs
        _rhs(kind, tnew, ynew, p, fnew)
        for i in range(n):
            K[N_STAGES, i] = fnew[i]
        err5 = 0.0
        err3 = 0.0
        for i in range(n):
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            e5 = 0.0
            e3 = 0.0
            for j in range(N_STAGES + 1):
                e5 += E5[j] * K[j, i]
                e3 += E3[j] * K[j, i]
            err5 += (e5 / sc) ** 2
            err3 += (e3 / sc) ** 2
        denom = err5 + 0.01 * err3
        if denom > 0.0:
            err = h * err5 / np.sqrt(denom * n)
        else:
            err = 0.0
        if err < 1.0:
            if err == 0.0:
                factor = MAX_FACTOR
            else:
                factor = min(MAX_FACTOR, SAFETY * err ** (-1.0 / 8.0))
            t = tnew
            for i in range(n):
                y[i] = ynew[i]
                K[0, i] = fnew[i]
            steps += 1
            h = h * factor
        else:
            h = h * max(MIN_FACTOR, SAFETY * err ** (-1.0 / 8.0))
    return y, t, OK, steps


@njit(cache=True)
def torus_lift(theta0, tau0, tau1, p, rtol, atol, tab):
    y0 = np.empty(1)
    y0[0] = theta0
    y, t, status, _ = _integrate(TORUS, tau0, tau1, y0, p, rtol, atol, 0.1, tab)
    return y[0], t, status


@njit(cache=True)
def torus_lift_many(theta0, tau0, tau1, p, rtol, atol, tab):
    out = np.empty(theta0.shape[0])
    status = OK
    y0 = np.empty(1)
    for k in range(theta0.shape[0]):
        y0[0] = theta0[k]
        y, t, st, _ = _integrate(TORUS, tau0, tau1, y0, p, rtol, atol, 0.1, tab)
        out[k] = y[0]
        if st != OK:
            status = st
    return out, status


@njit(cache=True)
def torus_iterate(theta0, n_periods, p, rtol, atol, tab):
    """Orbit of the lifted period map, theta_k for k = 0..n_periods."""
    orbit = np.empty(n_periods + 1)
    orbit[0] = theta0
    y0 = np.empty(1)
    two_pi = 2.0 * np.pi
    for k in range(n_periods):
        # h commutes with integer translations, so restart from the reduced angle
        base = two_pi * np.floor(orbit[k] / two_pi)
        y0[0] = orbit[k] - base
        y, t, st, _ = _integrate(TORUS, 0.0, two_pi, y0, p, rtol, atol, 0.1, tab)
        if st != OK:
            return orbit[: k + 1], st
        orbit[k + 1] = y[0] + base
    return orbit, OK


@njit(cache=True)
def torus_variational(theta0, tau0, tau1, p, rtol, atol, tab):
    y0 = np.zeros(6)
    y0[0] = theta0
    y0[1] = 1.0
    y, t, status, _ = _integrate(TORUS_VAR, tau0, tau1, y0, p, rtol, atol, 0.1, tab)
    return y, t, status
