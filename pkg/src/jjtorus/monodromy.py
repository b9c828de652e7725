"""The associated linear system on the Riemann sphere and its monodromy.

    Y' = (-s K / z^2 + R / z + s N) Y,
    K = [[1/2, chi], [0, 0]],  R = [[-(ell + chi a), -a/2], [a/2, chi a]],
    N = [[-1/2, 0], [chi, 0]].

Phi = Y2 / Y1 solves the Riccati equation of the extended torus family; on
|z| = 1 with z = e^{i tau}, Phi = e^{i theta} and chi = 0 this is the
torus flow itself.
"""

from dataclasses import dataclass
import cmath
import math

import numpy as np
from scipy.integrate import solve_ivp

from .dynamics import TWO_PI, flow_lift
from .errors import DomainError, IntegrationError

MONO_TOL = 1e-12
TRIVIAL_TOL = 1e-6
N_SEGMENTS = 256


@dataclass(frozen=True)
class LinearSystemParams:
    ell: float
    chi: float
    a: float
    s: float

    @property
    def K(self):
        return np.array([[0.5, self.chi], [0.0, 0.0]], dtype=complex)

    @property
    def R(self):
        c, a = self.chi, self.a
        return np.array([[-(self.ell + c * a), -a / 2.0], [a / 2.0, c * a]], dtype=complex)

    @property
    def N(self):
        return np.array([[-0.5, 0.0], [self.chi, 0.0]], dtype=complex)

    @property
    def psi(self):
        return 2.0 * self.s * self.chi

    @property
    def nu(self):
        return self.ell + 2.0 * self.chi * self.a

    def matrix(self, z):
        return -self.s * self.K / z ** 2 + self.R / z + self.s * self.N

    @classmethod
    def josephson(cls, B, A, omega):
        return cls(B / omega, 0.0, 1.0 / omega, A / omega)


@dataclass
class Monodromy2x2:
    """Holonomy matrix; ``segment_dets`` holds det of each transported piece.

    For large |M| the determinant of the assembled matrix loses digits to
    cancellation (about eps |M|^2), so det uses the product of the
    piecewise determinants, which are well conditioned.
    """

    entries: np.ndarray
    base_point: complex
    radius: float
    tolerance: float
    segment_dets: np.ndarray = None

    @property
    def det(self):
        if self.segment_dets is not None:
            return complex(np.prod(self.segment_dets))
        return complex(np.linalg.det(self.entries))

    @property
    def trace(self):
        return complex(np.trace(self.entries))

    def distance_to_identity(self):
        return float(np.linalg.norm(self.entries - np.eye(2), 2))

    def liouville_error(self, ell):
        """|det M - exp(2 pi i tr R)| with tr R = -ell."""
        return abs(self.det - cmath.exp(-2j * math.pi * ell))


def _transport(params, path, Y0, tol, max_step=np.inf):
    """Fundamental-matrix transport along t -> path(t), t in [0, 1]; path returns (z, dz/dt)."""
    def f(t, y):
        z, dz = path(t)
        Y = y.reshape(2, 2)
        return (params.matrix(z) @ Y * dz).ravel()

    sol = solve_ivp(f, (0.0, 1.0), np.asarray(Y0, dtype=complex).ravel(), method="DOP853",
                    rtol=tol, atol=tol * 1e-3, max_step=max_step)
    if sol.status != 0:
        raise IntegrationError("linear system integration failed", reached=sol.t[-1])
    return sol.y[:, -1].reshape(2, 2)


def _circle_segments(params, zr, n, tol):
    """Transports T_k over the n arcs of |z| = |zr| from zr, all started at I."""
    k = np.arange(n)

    def f(t, y):
        ph = 2.0 * math.pi * (k + t) / n
        z = zr * np.exp(1j * ph)
        dz = 2j * math.pi * z / n
        Y = y.reshape(n, 2, 2)
        A = (-params.s * params.K[None] / z[:, None, None] ** 2
             + params.R[None] / z[:, None, None] + params.s * params.N[None])
        return (A @ Y * dz[:, None, None]).ravel()

    y0 = np.tile(np.eye(2, dtype=complex), (n, 1, 1)).ravel()
    sol = solve_ivp(f, (0.0, 1.0), y0, method="DOP853", rtol=tol, atol=tol * 1e-3)
    if sol.status != 0:
        raise IntegrationError("linear system integration failed", reached=sol.t[-1])
    return sol.y[:, -1].reshape(n, 2, 2)


def monodromy(params, tol=MONO_TOL, base_point=1.0, radius=1.0, n_segments=N_SEGMENTS):
    """Monodromy of a counterclockwise circuit around z = 0.

    The fundamental matrix equals I at ``base_point`` (|base_point| = 1).
    For radius != 1 the circuit is |z| = radius, reached and left along the
    ray through the base point, so the result is comparable across radii.
    The circle is cut into n_segments arcs, each transported from I
    (adaptively, all arcs in one integration), and M is their ordered product.
    """
    if params.s == 0:
        raise DomainError("s = 0 is not covered: the system must have its irregular pole at 0")
    z0 = complex(base_point)
    if abs(abs(z0) - 1.0) > 1e-12:
        raise DomainError("base point must lie on the unit circle")
    eye = np.eye(2, dtype=complex)
    pieces = []
    if radius != 1.0:
        pieces.append(_transport(params, lambda t: (z0 * (1.0 + t * (radius - 1.0)), z0 * (radius - 1.0)),
                                 eye, tol))
    pieces.extend(_circle_segments(params, z0 * radius, n_segments, tol))
    if radius != 1.0:
        pieces.append(_transport(params, lambda t: (z0 * (radius + t * (1.0 - radius)), z0 * (1.0 - radius)),
                                 eye, tol))
    M = eye
    for T in pieces:
        M = T @ M
    dets = np.array([T[0, 0] * T[1, 1] - T[0, 1] * T[1, 0] for T in pieces])
    return Monodromy2x2(M, z0, radius, tol, dets)


def riccati_rhs(params, z, phi):
    """dPhi/dz of the Riccati equation equivalent to the linear system."""
    s, psi, nu, a = params.s, params.psi, params.nu, params.a
    return ((s / 2.0 * phi + psi / 2.0 * phi * phi) / z ** 2
            + (nu * phi + a / 2.0 * (phi * phi + 1.0)) / z
            + (s / 2.0 * phi + psi / 2.0))


@dataclass
class RiccatiCheck:
    linear_residual: float     # |Phi' - rhs(Phi)| with Phi' from the linear system
    direct_difference: float   # |Y2/Y1 - Phi| with Phi integrated from the Riccati equation


def riccati_consistency(params, z_path, phi0=1.0, tol=MONO_TOL, n_check=20, min_y1=1e-8):
    """Check Phi = Y2 / Y1 against the Riccati equation along a polygonal z path."""
    z_path = [complex(z) for z in z_path]
    if any(z == 0 for z in z_path):
        raise DomainError("path passes through z = 0")
    y = np.array([1.0, phi0], dtype=complex)
    phi = complex(phi0)
    lin_res = diff = 0.0
    for z_a, z_b in zip(z_path[:-1], z_path[1:]):
        dz = z_b - z_a

        def f(t, v, z_a=z_a, dz=dz):
            z = z_a + t * dz
            Y = v[:2]
            dY = params.matrix(z) @ Y * dz
            dphi = riccati_rhs(params, z, v[2]) * dz
            return np.array([dY[0], dY[1], dphi])

        sol = solve_ivp(f, (0.0, 1.0), np.array([y[0], y[1], phi]), method="DOP853",
                        rtol=tol, atol=tol * 1e-3, dense_output=True)
        if sol.status != 0:
            raise IntegrationError("Riccati consistency integration failed")
        for t in np.linspace(0.0, 1.0, n_check):
            v = sol.sol(t)
            z = z_a + t * dz
            Y1, Y2 = v[0], v[1]
            if abs(Y1) < min_y1 * (abs(Y1) + abs(Y2)):
                raise DomainError(f"Y1 vanishes near z = {z}; choose another path")
            dY = params.matrix(z) @ v[:2]
            ph = Y2 / Y1
            dph = (dY[1] * Y1 - Y2 * dY[0]) / Y1 ** 2
            lin_res = max(lin_res, abs(dph - riccati_rhs(params, z, ph)) / (1.0 + abs(ph)) ** 2)
            diff = max(diff, abs(ph - v[2]) / (1.0 + abs(ph)))
        y, phi = sol.y[:2, -1], sol.y[2, -1]
    return RiccatiCheck(lin_res, diff)


def torus_consistency(ell, a, s, theta0, taus, tol=MONO_TOL):
    """max |theta_linear(tau) - theta_torus(tau)| over the sample times.

    theta_linear is the unwrapped argument of Y2/Y1 along z = e^{i tau}
    (chi = 0), theta_torus the lift of the torus flow from core dynamics.
    """
    params = LinearSystemParams(ell, 0.0, a, s)
    taus = np.sort(np.asarray(taus, dtype=float))

    def f(tau, v):
        z = cmath.exp(1j * tau)
        return params.matrix(z) @ v * (1j * z)

    sol = solve_ivp(f, (0.0, taus[-1]), np.array([1.0, cmath.exp(1j * theta0)]),
                    method="DOP853", rtol=tol, atol=tol * 1e-3, dense_output=True)
    fine = np.linspace(0.0, taus[-1], 64 * max(1, int(math.ceil(taus[-1] / TWO_PI))) + 1)
    grid = np.union1d(fine, taus)
    Y = sol.sol(grid)
    theta = theta0 + np.unwrap(np.angle(Y[1] / Y[0]) - theta0)
    theta_lin = np.interp(taus, grid, theta)
    theta_flow = np.array([flow_lift(theta0, 0.0, t, (ell, a, s)) if t > 0 else theta0
                           for t in taus])
    return float(np.max(np.abs(theta_lin - theta_flow)))


def constriction_certificate(point, tol=MONO_TOL):
    """True iff the monodromy at a constriction point is the identity to TRIVIAL_TOL."""
    if point.A == 0:
        raise DomainError("growth points (A = 0) are not constrictions")
    params = LinearSystemParams(point.ell, 0.0, 1.0 / point.omega, point.A / point.omega)
    return monodromy(params, tol).distance_to_identity() < TRIVIAL_TOL
