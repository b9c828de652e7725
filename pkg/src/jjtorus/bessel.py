"""Bessel functions of the first kind, their zeros, and the next-zero map.

``bessel_j`` evaluates J_nu for real order nu and real argument.  Small
arguments use the power series directly; otherwise the ratios J_{nu+k}/J_nu
come from Miller's backward recurrence, normalised with the Neumann sum

    (x/2)**nu = sum_k c_k J_{nu+2k}(x),   c_0 = Gamma(nu+1),
    c_k = (nu+2k) Gamma(nu+k) / k!.

The second solution Y_nu is never formed: anything that needs a solution of
Bessel's equation other than J integrates the equation numerically.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import DomainError, IntegrationError, PoleError

MAX_ARG = 200.0
ODE_RTOL = 1e-13
ODE_ATOL = 1e-15


def _series(nu, x):
    # terms alternate and peak near p ~ x/2; only used where that peak is O(1)
    q = -(x * x) / 4.0
    term = (x / 2.0) ** nu / math.gamma(nu + 1.0)
    total = term
    p = 0
    while True:
        p += 1
        term *= q / (p * (p + nu))
        total += term
        if abs(term) <= 1e-17 * abs(total) and p > 2:
            return total


def _miller(nu, x, kmax):
    """J_{nu+k}(x) for k = 0..kmax, nu >= 0, x > 0."""
    start = int(max(nu, x) + 3 * x ** (1.0 / 3.0) + 40) + kmax
    start += start % 2
    vals = np.zeros(start + 2)
    vals[start + 1] = 0.0
    vals[start] = 1e-300
    for k in range(start, 0, -1):
        vals[k - 1] = 2.0 * (nu + k) / x * vals[k] - vals[k + 1]
        if abs(vals[k - 1]) > 1e250:
            vals[k - 1 :] *= 1e-250
    # Neumann normalisation; lgamma keeps c_k finite for large orders
    norm = 0.0
    lx = nu * math.log(x / 2.0)
    for k in range(0, start + 1, 2):
        j = k // 2
        if j == 0:
            logc = math.lgamma(nu + 1.0)
            sign = 1.0
        else:
            logc = math.lgamma(nu + j) - math.lgamma(j + 1.0)
            sign = nu + 2.0 * j
        norm += sign * math.exp(logc - lx) * vals[k]
    return vals[: kmax + 1] / norm


def _j_positive(nu, x, kmax=0):
    # nu >= 0, x > 0; returns J_{nu+k}(x), k = 0..kmax
    if x * x / 4.0 <= 2.0 + 0.5 * nu:
        return np.array([_series(nu + k, x) for k in range(kmax + 1)])
    return _miller(nu, x, kmax)


def bessel_j(ell, x):
    """J_ell(x) for real order ``ell`` and real ``x`` with |x| <= MAX_ARG.

    Negative arguments are accepted for integer orders only, through
    J_n(-x) = (-1)**n J_n(x).  Negative integer orders use J_{-n} = (-1)**n J_n;
    negative non-integer orders are reached by downward recurrence from a
    positive order.
    """
    ell = float(ell)
    x = float(x)
    if not math.isfinite(x) or abs(x) > MAX_ARG:
        raise DomainError(f"|x| = {abs(x)} outside supported range {MAX_ARG}")
    is_int = ell == round(ell)
    if x < 0.0:
        if not is_int:
            raise DomainError("negative argument needs an integer order")
        n = int(round(ell))
        return (-1.0) ** (n % 2) * bessel_j(ell, -x)
    if x == 0.0:
        if ell == 0.0:
            return 1.0
        if ell > 0.0 or is_int:
            return 0.0
        raise DomainError("J_nu(0) is infinite for negative non-integer nu")
    if ell >= 0.0:
        return float(_j_positive(ell, x)[0])
    if is_int:
        n = int(round(-ell))
        return (-1.0) ** (n % 2) * float(_j_positive(float(n), x)[0])
    # downward recurrence J_{m-1} = (2m/x) J_m - J_{m+1} from the first order >= 0
    shift = int(math.ceil(-ell))
    base = ell + shift
    j0, j1 = _j_positive(base, x, 1)
    hi, cur = j1, j0
    m = base
    for _ in range(shift):
        lower = 2.0 * m / x * cur - hi
        hi, cur = cur, lower
        m -= 1.0
    return float(cur)


def bessel_jp(ell, x):
    """Derivative J'_ell(x) = (J_{ell-1}(x) - J_{ell+1}(x)) / 2."""
    return 0.5 * (bessel_j(ell - 1.0, x) - bessel_j(ell + 1.0, x))


def bessel_j_integral(n, x):
    """Integer-order J_n(x) from the Bessel integral, by adaptive quadrature.

    Independent of the series/recurrence path; used as a cross-check.
    """
    from scipy.integrate import quad

    if n != round(n):
        raise DomainError("integral representation needs an integer order")
    val, _ = quad(lambda t: math.cos(n * t - x * math.sin(t)), 0.0, math.pi,
                  epsabs=1e-13, epsrel=1e-13, limit=200)
    return val / math.pi


@dataclass(frozen=True)
class BesselZeroTable:
    ell: float
    zeros: np.ndarray

    def __len__(self):
        return len(self.zeros)

    def __getitem__(self, k):
        """1-based: ``table[1]`` is the first positive zero."""
        if k < 1:
            raise IndexError("zeros are numbered from 1")
        return float(self.zeros[k - 1])


def _polish(ell, z):
    for _ in range(3):
        d = bessel_jp(ell, z)
        if d == 0.0:
            break
        step = bessel_j(ell, z) / d
        z -= step
        if abs(step) < 1e-15 * z:
            break
    return z


def bessel_zeros(ell, k_max):
    """First ``k_max`` positive zeros of J_ell, bracketed then refined."""
    if k_max < 1:
        raise DomainError("k_max must be >= 1")
    ell = float(ell)
    zeros = []
    # consecutive zeros are more than 2.5 apart for every real order >= -1/2
    step = 0.25
    x = 1e-3 if ell > -1.0 else 1e-6
    fx = bessel_j(ell, x)
    while len(zeros) < k_max:
        xn = x + step
        if xn > MAX_ARG:
            raise DomainError("zeros beyond the supported argument range")
        fn = bessel_j(ell, xn)
        if fx == 0.0:
            zeros.append(x)
        elif fx * fn < 0.0:
            z = brentq(lambda t: bessel_j(ell, t), x, xn, xtol=1e-15, rtol=1e-15)
            zeros.append(_polish(ell, z))
        x, fx = xn, fn
    return BesselZeroTable(ell, np.array(zeros[:k_max]))


def _bessel_rhs(ell):
    l2 = ell * ell

    def rhs(s, y):
        return [y[1], -y[1] / s - (1.0 - l2 / (s * s)) * y[0]]

    return rhs


def _crossing(ev):
    ev.terminal = True
    ev.direction = 0
    return ev


def next_zero_of_solution(ell, s0):
    """Next zero s1 > s0 of the solution of Bessel's equation with v(s0)=0, v'(s0)=1.

    The zero is located as a terminal event of the integration and then
    polished by Newton steps on re-integrated values.
    """
    if s0 <= 0.0:
        raise DomainError("s0 must be positive")
    rhs = _bessel_rhs(float(ell))
    # skip the starting zero: look for v = 0 only once v' has carried us off it
    ev = _crossing(lambda s, y: y[0] if s > s0 + 1e-9 * max(1.0, s0) else 1.0)
    s_end = s0 + 4.0 * math.pi + 2.0 * abs(ell) + 10.0
    sol = solve_ivp(rhs, (s0, s_end), [0.0, 1.0], method="DOP853", events=ev,
                    rtol=ODE_RTOL, atol=ODE_ATOL)
    if not sol.t_events[0].size:
        raise IntegrationError("no second zero found", reached=sol.t[-1])
    s1 = float(sol.t_events[0][0])
    for _ in range(3):
        v, dv = _solve_to(rhs, s0, s1)
        step = v / dv
        s1 -= step
        if abs(step) < 1e-14 * s1:
            break
    return s1


def _solve_to(rhs, s0, s1, y0=(0.0, 1.0)):
    sol = solve_ivp(rhs, (s0, s1), list(y0), method="DOP853", rtol=ODE_RTOL, atol=ODE_ATOL)
    if sol.status != 0:
        raise IntegrationError(sol.message, reached=sol.t[-1])
    return sol.y[0, -1], sol.y[1, -1]


def riccati_w_bessel(ell, s0, w0, s1):
    """Value at ``s1`` of the solution of w' = (2 ell - 1) w / s - w**2 - 1 with w(s0) = w0.

    The Riccati equation is linearised by w = u'/u, u'' + (1 - 2 ell) u'/s + u = 0,
    so poles of w on the path are crossed without special handling.  ``w0`` may
    be ``inf`` to start on a pole.  Raises PoleError when s1 is a pole.
    """
    if s0 <= 0.0 or s1 <= 0.0:
        raise DomainError("s0 and s1 must be positive")
    if math.isinf(w0):
        y0 = (0.0, 1.0)
    else:
        y0 = (1.0, float(w0))
    if s1 == s0:
        if math.isinf(w0):
            raise PoleError("initial point is a pole", location=s0)
        return float(w0)
    c = 1.0 - 2.0 * float(ell)

    def rhs(s, y):
        return [y[1], -c * y[1] / s - y[0]]

    u, du = _solve_to(rhs, s0, s1, y0)
    if abs(u) <= 1e-13 * max(1.0, abs(du)):
        raise PoleError(f"pole of w at s = {s1}", location=s1)
    return du / u
