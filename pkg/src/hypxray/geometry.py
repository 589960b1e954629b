"""Poincare-disk primitives: metric factors, geodesics, first integrals.

Points of the disk are complex numbers ``z`` with ``|z| < 1``. The metric is
``|dz|^2 / c(z)^2`` with ``c(z) = (1 - |z|^2) / 2``. A phase point ``(z, theta)``
is the unit vector ``c(z) (e^{i theta} d/dz + e^{-i theta} d/dzbar)``, so that a
curve with complex velocity ``zdot`` has fiber angle ``theta = arg(zdot)``.

Oriented geodesics are labelled by ``(beta, a)``: the geodesic leaves the
boundary at ``e^{i beta}`` and arrives at ``e^{i(beta + pi + 2 arctan a)}``.
All functions broadcast over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi
EPS_BOUNDARY = 1e-12
ANGLE_TOL = 1e-10


def reduce_angle(angle):
    """Reduce angles to ``[0, 2 pi)``, snapping values within ANGLE_TOL of 2 pi to 0."""
    out = np.mod(angle, TWO_PI)
    out = np.where(TWO_PI - out < ANGLE_TOL, 0.0, out)
    return out if np.ndim(out) else float(out)


def angle_distance(a1, a2):
    """Distance between two angles on the circle."""
    d = np.mod(np.asarray(a1) - np.asarray(a2), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def c_factor(z):
    """Conformal factor ``c(z) = (1 - |z|^2) / 2``."""
    return 0.5 * (1.0 - np.abs(z) ** 2)


def bdf_x(z):
    """Boundary defining function ``x(z) = (1 - |z|^2) / (1 + |z|^2)``."""
    r2 = np.abs(z) ** 2
    return (1.0 - r2) / (1.0 + r2)


def klein_map(z):
    """Map the Poincare disk to the Klein disk, ``K = 2 z / (1 + |z|^2)``.

    Geodesics become straight chords and ``1 - |K|^2 = x(z)^2``.
    """
    return 2.0 * z / (1.0 + np.abs(z) ** 2)


def mu_hat(a):
    """Boundary weight on geodesic space, ``(1 + a^2)^{-1/2}``."""
    return 1.0 / np.sqrt(1.0 + np.asarray(a, dtype=float) ** 2)


@dataclass(frozen=True)
class DiskPoint:
    """Interior point (or array of points) of the unit disk."""

    z: complex | np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=complex)
        if not np.all(np.abs(z) < 1.0 - EPS_BOUNDARY):
            raise ValueError("DiskPoint requires |z| < 1 - eps_boundary")
        object.__setattr__(self, "z", z if z.ndim else complex(z))

    @property
    def c(self):
        return c_factor(self.z)

    @property
    def x(self):
        return bdf_x(self.z)


@dataclass(frozen=True)
class PhasePoint:
    """Point of the unit tangent bundle: base point plus fiber angle."""

    base: DiskPoint
    theta: float | np.ndarray = field(default=0.0)

    def __post_init__(self):
        if not isinstance(self.base, DiskPoint):
            object.__setattr__(self, "base", DiskPoint(self.base))
        object.__setattr__(self, "theta", reduce_angle(self.theta))

    @property
    def z(self):
        return self.base.z


@dataclass(frozen=True)
class Geodesic:
    """Oriented geodesic (or array of them) with parameters ``(beta, a)``."""

    beta: float | np.ndarray
    a: float | np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if not np.all(np.isfinite(a)):
            raise ValueError("Geodesic slope parameter a must be finite")
        object.__setattr__(self, "beta", reduce_angle(self.beta))
        object.__setattr__(self, "a", a if a.ndim else float(a))

    @property
    def mu(self):
        return mu_hat(self.a)

    @property
    def omega(self):
        """Phase angle ``beta + arctan a + pi/2`` carried by the first integrals."""
        return self.beta + np.arctan(self.a) + 0.5 * np.pi

    @property
    def endpoints(self):
        """Backward and forward boundary endpoints ``(z_minus, z_plus)``."""
        zm = np.exp(1j * self.beta)
        zp = np.exp(1j * (self.beta + np.pi + 2.0 * np.arctan(self.a)))
        return zm, zp


def _chi_parts(t):
    """``chi = tanh(t/2)`` together with ``1 - chi^2`` and ``1 + chi`` computed stably."""
    t = np.asarray(t, dtype=float)
    chi = np.tanh(0.5 * t)
    one_minus_chi2 = 1.0 / np.cosh(0.5 * t) ** 2
    one_plus_chi = 2.0 / (1.0 + np.exp(-np.clip(t, -700.0, 700.0)))
    return chi, one_minus_chi2, one_plus_chi


def geodesic_point(g: Geodesic, t):
    """Position ``z_{beta,a}(t)`` of the unit-speed geodesic at time ``t``."""
    a = g.a
    chi, _, one_plus_chi = _chi_parts(t)
    num = 2.0 * chi + 1j * a * one_plus_chi
    den = 1j * a * one_plus_chi - 2.0
    return np.exp(1j * g.beta) * num / den


def geodesic_velocity(g: Geodesic, t):
    """Complex velocity ``dz/dt``; its modulus equals ``c(z)``.

    Uses the closed derivative of the Mobius parametrization, which agrees
    with ``-(z - z_-)(z - z_+)/(z_+ - z_-)`` but stays accurate near the
    endpoints where that product cancels.
    """
    a = g.a
    _, one_minus_chi2, one_plus_chi = _chi_parts(t)
    den = 1j * a * one_plus_chi - 2.0
    return -2.0 * np.exp(1j * g.beta) * one_minus_chi2 / den**2


def geodesic_velocity_endpoints(g: Geodesic, t):
    """Velocity from the endpoint formula ``-(z - z_-)(z - z_+)/(z_+ - z_-)``."""
    z = geodesic_point(g, t)
    zm, zp = g.endpoints
    return -(z - zm) * (z - zp) / (zp - zm)


def geodesic_one_minus_r2(g: Geodesic, t):
    """``1 - |z(t)|^2`` along the geodesic, free of cancellation for large ``|t|``."""
    a = np.asarray(g.a, dtype=float)
    _, one_minus_chi2, one_plus_chi = _chi_parts(t)
    return 4.0 * one_minus_chi2 / (4.0 + a**2 * one_plus_chi**2)


def geodesic_x(g: Geodesic, t):
    """Boundary defining function ``x`` evaluated along the geodesic."""
    q = geodesic_one_minus_r2(g, t)
    return q / (2.0 - q)


def closest_approach_time(g: Geodesic):
    """Time at which the geodesic is closest to the origin.

    Along the geodesic ``x(z(t* + s)) = x(z(t*)) / cosh(s)``.
    """
    root = np.sqrt(1.0 + np.asarray(g.a, dtype=float) ** 2)
    return 2.0 * np.arctanh((1.0 - root) / (1.0 + root))


def antipodal(g: Geodesic) -> Geodesic:
    """Orientation reversal ``(beta, a) -> (beta + pi + 2 arctan a, -a)``."""
    return Geodesic(g.beta + np.pi + 2.0 * np.arctan(g.a), -np.asarray(g.a))


def trace_w_xi(g: Geodesic):
    """Constant values of the first integrals ``(w, xi)`` along geodesic ``g``."""
    phase = np.exp(1j * g.omega)
    mu = g.mu
    return phase * (-np.asarray(g.a)) * mu, phase * 0.5j * mu


def first_integrals(p: PhasePoint):
    """Return ``(xi_minus, xi_plus, w, xi)`` at a phase point.

    ``xi_minus`` and ``xi_plus`` are the backward and forward endpoints of the
    geodesic through ``p``; ``w`` and ``xi`` are their half sum and quarter
    difference.
    """
    z = p.z
    e = np.exp(1j * p.theta)
    xi_plus = (z + e) / (1.0 + np.conj(z) * e)
    xi_minus = (z - e) / (1.0 - np.conj(z) * e)
    return xi_minus, xi_plus, 0.5 * (xi_plus + xi_minus), 0.25 * (xi_plus - xi_minus)


def project_to_geodesic(p: PhasePoint):
    """Geodesic through a phase point and the time at which it passes there.

    Returns ``(g, t)`` with ``geodesic_point(g, t) = z`` and
    ``arg geodesic_velocity(g, t) = theta``.
    """
    beta, a, t = geodesic_space_point(p.z, p.theta)
    return Geodesic(beta, a), t


def geodesic_space_point(z, theta):
    """Array form of :func:`project_to_geodesic` returning ``(beta, a, t)`` without validation."""
    z = np.asarray(z, dtype=complex)
    e = np.exp(1j * np.asarray(theta, dtype=float))
    # quadrature nodes may round onto the boundary circle, where the
    # projection degenerates; their contributions carry a vanishing weight
    with np.errstate(divide="ignore", invalid="ignore"):
        xi_plus = (z + e) / (1.0 + np.conj(z) * e)
        xi_minus = (z - e) / (1.0 - np.conj(z) * e)
        beta = np.mod(np.angle(xi_minus), TWO_PI)
        delta = np.mod(np.angle(xi_plus / xi_minus), TWO_PI)
        a = np.tan(0.5 * (delta - np.pi))
        zeta = z * np.exp(-1j * beta)
        chi = (1j * a + 2.0 * zeta - 1j * a * zeta) / (1j * a * zeta - 2.0 - 1j * a)
        t = 2.0 * np.arctanh(np.clip(chi.real, -1.0, 1.0))
    return beta, a, t


def apply_X(u_grad, z, theta):
    """Apply the geodesic vector field to a phase function at ``(z, theta)``.

    ``u_grad(z, theta)`` must return the triple of partial derivatives
    ``(du/du1, du/du2, du/dtheta)`` where ``z = u1 + i u2``. Plain arrays are
    accepted so that quadrature nodes close to the boundary need no validation.
    """
    z = np.asarray(z, dtype=complex)
    theta = np.asarray(theta, dtype=float)
    d1, d2, dth = u_grad(z, theta)
    c = c_factor(z)
    dc1, dc2 = -np.real(z), -np.imag(z)
    cos, sin = np.cos(theta), np.sin(theta)
    return cos * c * d1 + sin * c * d2 + (dc1 * sin - dc2 * cos) * dth
