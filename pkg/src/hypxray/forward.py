"""The geodesic X-ray transform on the Poincare disk.

Numerical transforms integrate along each geodesic in the shifted time
``s = t - t*`` where ``t*`` is the closest approach to the origin. There
``x(z(t* + s)) = x(z(t*)) / cosh(s)``, which gives a clean tail bound for
integrands dominated by ``x^delta``. Many geodesics are integrated together
as one vector-valued adaptive Gauss-Kronrod problem.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec
from scipy.special import betaln, gammaln

from .fiber import IttTensor, ScalarField
from .geometry import (
    Geodesic,
    bdf_x,
    c_factor,
    closest_approach_time,
    geodesic_point,
    geodesic_space_point,
    geodesic_velocity,
    geodesic_x,
    trace_w_xi,
)

MAX_TAIL = 400.0


class NonConvergent(RuntimeError):
    """Adaptive quadrature hit its refinement limit before meeting tolerance."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for integrals along geodesics.

    ``t_max`` is the minimum half-length of the integration window around the
    closest approach; it is lengthened when the declared decay rate of the
    integrand is too slow for the tail to fall below ``abs_tol``.
    ``max_refinement`` bounds the adaptive subdivision at ``2**max_refinement``
    panels. ``chunk`` is the number of geodesics integrated jointly.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    t_max: float = 40.0
    max_refinement: int = 12
    chunk: int = 2048

    def __post_init__(self):
        if not (0 < self.rel_tol < 1 and 0 < self.abs_tol < 1):
            raise ValueError("tolerances must lie in (0, 1)")
        if self.t_max <= 0 or self.max_refinement < 1 or self.chunk < 1:
            raise ValueError("t_max, max_refinement and chunk must be positive")

    def window(self, delta):
        """Half-length ``T`` of the time window for integrands bounded by ``x^delta``.

        The tail beyond ``T`` is at most ``2^{1+delta} e^{-delta T} / delta``.
        """
        if not np.isfinite(delta):
            return self.t_max
        if delta <= 0:
            raise ValueError("integrand must decay (delta > 0)")
        needed = np.log(2.0 ** (1.0 + delta) / (delta * self.abs_tol)) / delta
        return float(max(self.t_max, min(needed, MAX_TAIL)))


def _breakpoints(T):
    fine = np.arange(-8.0, 8.0 + 1e-9, 0.5)
    coarse = np.arange(10.0, T, 2.0)
    pts = np.concatenate([-coarse[::-1], fine, coarse])
    return pts[(pts > -T) & (pts < T)]


def integrate_along(integrand, g: Geodesic, quad: QuadratureSpec = QuadratureSpec(), delta=1.0, workers=1):
    """Integrate ``integrand(g_chunk, t)`` over the whole line for every geodesic in ``g``.

    ``integrand`` receives a flat :class:`Geodesic` chunk and a scalar time,
    and returns one value per geodesic. Chunks are fixed in size and processed
    in order, so the result does not depend on ``workers``.
    """
    beta, a = np.broadcast_arrays(np.asarray(g.beta, float), np.asarray(g.a, float))
    shape = beta.shape
    beta, a = beta.ravel(), a.ravel()
    T = quad.window(delta)
    points = _breakpoints(T)

    def run(start):
        gc = Geodesic(beta[start:start + quad.chunk], a[start:start + quad.chunk])
        tstar = closest_approach_time(gc)
        res, err, info = quad_vec(
            lambda s: np.asarray(integrand(gc, tstar + s), dtype=complex),
            -T, T, epsabs=quad.abs_tol, epsrel=quad.rel_tol, norm="max",
            limit=2**quad.max_refinement, points=points, full_output=True,
        )
        if not info.success:
            bad = start + np.argsort(-np.abs(np.asarray(err) if np.ndim(err) else np.zeros(gc.a.size)))[:1]
            raise NonConvergent(f"quadrature did not converge (status {info.status}); "
                                f"first geodesic index {int(bad[0])}", bad)
        return np.atleast_1d(res)

    starts = range(0, beta.size, quad.chunk)
    if workers > 1 and beta.size > quad.chunk:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    out = np.concatenate(parts) if parts else np.zeros(0, complex)
    return out.reshape(shape) if shape else complex(out[0])


def xray_phase(F, g: Geodesic, quad: QuadratureSpec = QuadratureSpec(), delta=1.0, workers=1):
    """X-ray transform of a phase function ``F(z, theta, x)``."""

    def integrand(gc, t):
        return F(geodesic_point(gc, t), np.angle(geodesic_velocity(gc, t)), geodesic_x(gc, t))

    return integrate_along(integrand, g, quad, delta, workers)


def xray_scalar(f: ScalarField, g: Geodesic, quad: QuadratureSpec = QuadratureSpec(), workers=1):
    """Numerical X-ray transform of a scalar field along geodesic(s) ``g``."""
    if not f.decay_delta > 0:
        raise ValueError("scalar field must decay at the boundary (decay_delta > 0)")

    def integrand(gc, t):
        return f(geodesic_point(gc, t), geodesic_x(gc, t))

    return integrate_along(integrand, g, quad, f.decay_delta, workers)


def ipq_coefficients(p, q):
    """Coefficients ``2 binom(p, 2l) B(l + 1/2, q)`` of the closed form, via log-gamma."""
    ell = np.arange(p // 2 + 1)
    logc = (gammaln(p + 1.0) - gammaln(2.0 * ell + 1.0) - gammaln(p - 2.0 * ell + 1.0)
            + betaln(ell + 0.5, q))
    return 2.0 * np.exp(logc)


def ipq_from_w_xi(p, q, w, xi):
    """``I_{p,q}`` as a polynomial in the first integrals ``w`` and ``xi``."""
    coeff = ipq_coefficients(p, q)
    w = np.asarray(w, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    total = np.zeros(np.broadcast(w, xi).shape, dtype=complex)
    for ell, cf in enumerate(coeff):
        total = total + cf * (2.0 * xi) ** (2 * ell) * w ** (p - 2 * ell)
    return xi**q * total


def ipq_closed(p, q, g: Geodesic):
    """Closed-form transform of ``z^p dz^q``: ``integral z^p zdot^q dt``."""
    if p < 0 or q < 1:
        raise ValueError("need p >= 0 and q >= 1")
    w, xi = trace_w_xi(g)
    return ipq_from_w_xi(p, q, w, xi)


def xray_numeric_pq(p, q, g: Geodesic, quad: QuadratureSpec = QuadratureSpec(), workers=1):
    """Quadrature of ``z(t)^p zdot(t)^q`` along the geodesic (oracle for :func:`ipq_closed`)."""

    def integrand(gc, t):
        return geodesic_point(gc, t) ** p * geodesic_velocity(gc, t) ** q

    return integrate_along(integrand, g, quad, float(q), workers)


def xray_tensor(f: IttTensor, g: Geodesic, quad: QuadratureSpec = QuadratureSpec(), workers=1,
                use_exact_scalar=True):
    """Transform of an iterated-tt tensor: scalar part plus closed-form tt parts.

    The scalar part uses the field's exact transform when it has one (and
    ``use_exact_scalar`` is set), otherwise adaptive quadrature.
    """
    beta, a = np.broadcast_arrays(np.asarray(g.beta, float), np.asarray(g.a, float))
    g = Geodesic(beta, a)
    if f.f0.profile.get("profile") == "zero":
        total = np.zeros(beta.shape, dtype=complex)
    elif use_exact_scalar and f.f0.xray_exact is not None:
        total = np.asarray(f.f0.xray_exact(g.beta, g.a), dtype=complex)
    else:
        total = np.asarray(xray_scalar(f.f0, g, quad, workers), dtype=complex)
    w, xi = trace_w_xi(g)
    for comp in f.components:
        q = comp.degree
        for p, b in enumerate(comp.plus):
            if b != 0:
                total = total + b * ipq_from_w_xi(p, q, w, xi)
        for p, d in enumerate(comp.minus):
            if d != 0:
                total = total + d * np.conj(ipq_from_w_xi(p, q, w, xi))
    return total if total.ndim else complex(total)


# ---------------------------------------------------------------------------
# phase-space integration


def santalo_lhs(F, r0, n_r=64, n_phi=128, n_theta=128):
    """Phase-space integral of ``F(z, theta, x)`` supported in ``|z| <= r0``.

    Tensor-product rule: Gauss-Legendre in the radius, trapezoid in the polar
    and fiber angles, with the hyperbolic area element ``c^{-2} dA``.
    """
    s, ws = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * r0 * (s + 1.0)
    wr = 0.5 * r0 * ws
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    z = r[:, None] * np.exp(1j * phi[None, :])
    area = (wr * r)[:, None] * (2.0 * np.pi / n_phi) / c_factor(z) ** 2
    vals = F(z[..., None], theta[None, None, :], bdf_x(z)[..., None])
    fiber = np.sum(vals, axis=-1) * (2.0 * np.pi / n_theta)
    return complex(np.sum(fiber * area))


def santalo_rhs(F, r0, quad: QuadratureSpec = QuadratureSpec(), n_beta=96, n_a=96, delta=np.inf, workers=1):
    """Geodesic-space integral of the transform of ``F`` (support in ``|z| <= r0``).

    Only geodesics with ``|a| < 2 r0 / (1 - r0^2)`` meet the disk of radius ``r0``.
    """
    a0 = 2.0 * r0 / (1.0 - r0**2)
    s, ws = np.polynomial.legendre.leggauss(n_a)
    a = a0 * s
    wa = a0 * ws
    beta = 2.0 * np.pi * np.arange(n_beta) / n_beta
    B, A = np.meshgrid(beta, a, indexing="ij")
    vals = xray_phase(F, Geodesic(B, A), quad, delta, workers)
    return complex(np.sum(vals * (2.0 * np.pi / n_beta) * wa[None, :]))


def right_inverse_lift(h, alpha):
    """Phase function whose transform reproduces ``h`` on geodesic space.

    ``h(beta, a)`` is any function on geodesic space. The lift is
    ``x^alpha h(pi(z, theta)) / I(x^alpha)(pi(z, theta))``; since ``h`` composed
    with the projection is constant along each geodesic, its transform is
    ``h``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    inv_norm = np.exp(-betaln(alpha / 2.0, 0.5))

    def F(z, theta, x=None):
        if x is None:
            x = bdf_x(z)
        beta, a, _ = geodesic_space_point(z, theta)
        return x**alpha * h(beta, a) * (1.0 + a**2) ** (alpha / 2.0) * inv_norm

    return F
