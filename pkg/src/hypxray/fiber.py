"""Tensor fields on the disk and their phase-space images.

A symmetric ``m``-tensor is stored in the complex frame
``dz^k dzbar^(m-k) / c^m`` for ``k = 0..m``. Evaluating it on the unit vector of
angle ``theta`` gives the phase function ``sum_k F_k e^{i(2k - m) theta}``.

Tensors in iterated transverse-traceless form are stored as a scalar part plus,
for each ``k = 1..n``, two polynomial coefficient lists: ``plus`` for
``sum_p b_p z^p dz^{2k}`` and ``minus`` for ``sum_p d_p zbar^p dzbar^{2k}``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import comb
from typing import Callable

import numpy as np
from scipy.special import betaln

from .geometry import bdf_x, c_factor, mu_hat


class AliasingWarning(UserWarning):
    """A fiber mode was requested that the angular sampling cannot resolve."""


# ---------------------------------------------------------------------------
# scalar fields


@dataclass(frozen=True)
class ScalarField:
    """Function on the disk with a declared boundary decay rate.

    ``evaluator(z, x)`` receives the points and the boundary defining function
    at those points (callers that know ``x`` more accurately than ``z`` does,
    such as geodesic integrators, pass it in). ``decay_delta`` is the exponent
    in ``|f| <= C x^delta``. ``xray_exact``, when present, maps ``(beta, a)``
    arrays to the exact X-ray transform.
    """

    evaluator: Callable
    decay_delta: float
    xray_exact: Callable | None = None
    profile: dict = field(default_factory=dict)

    def __call__(self, z, x=None):
        z = np.asarray(z, dtype=complex)
        if x is None:
            x = bdf_x(z)
        return np.asarray(self.evaluator(z, x), dtype=complex) * np.ones_like(z)

    def check_decay(self, radius=1.0 - 1e-3, n_samples=64, constant=None):
        """Sampled decay check on the ring ``|z| = radius``.

        Returns the largest ratio ``|f| / x^delta`` on the ring; when
        ``constant`` is given, returns whether that ratio stays below it.
        """
        zs = radius * np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
        x = bdf_x(zs)
        ratio = float(np.max(np.abs(self(zs, x)) / x**self.decay_delta))
        return ratio if constant is None else ratio <= constant

    # profiles -------------------------------------------------------------

    @classmethod
    def zero(cls):
        return cls(lambda z, x: 0.0, decay_delta=np.inf,
                   xray_exact=lambda beta, a: np.zeros(np.broadcast(beta, a).shape, complex),
                   profile={"profile": "zero"})

    @classmethod
    def constant(cls, value=1.0):
        """Constant field; not X-ray admissible (decay rate 0)."""
        return cls(lambda z, x: value, decay_delta=0.0, profile={"profile": "constant", "value": value})

    @classmethod
    def power_x(cls, alpha, amplitude=1.0):
        """``amplitude * x^alpha``; its transform is ``B(alpha/2, 1/2) mu^alpha``."""
        alpha = float(alpha)
        if alpha <= 0:
            raise ValueError("power_x needs alpha > 0")
        scale = amplitude * np.exp(betaln(alpha / 2, 0.5))

        def exact(beta, a):
            return scale * mu_hat(a) ** alpha * np.ones(np.broadcast(beta, a).shape) + 0j

        return cls(lambda z, x: amplitude * x**alpha, decay_delta=alpha, xray_exact=exact,
                   profile={"profile": "power_x", "alpha": alpha, "amplitude": amplitude})

    @classmethod
    def gaussian_bump(cls, center=0.0, width=0.5, amplitude=1.0):
        """Gaussian in hyperbolic distance: ``A exp(-d(z, center)^2 / width^2)``.

        Along a geodesic the distance grows linearly in time, so the field
        decays faster than any power of ``x``.
        """
        center = complex(*center) if isinstance(center, (list, tuple)) else complex(center)
        if not abs(center) < 1:
            raise ValueError("gaussian_bump center must lie in the disk")

        def ev(z, x):
            with np.errstate(divide="ignore"):
                d = 2.0 * np.arctanh(np.minimum(np.abs(z - center) / np.abs(1.0 - np.conj(center) * z), 1.0))
            return amplitude * np.exp(-((d / width) ** 2))

        return cls(ev, decay_delta=8.0,
                   profile={"profile": "gaussian_bump", "center": [center.real, center.imag],
                            "width": width, "amplitude": amplitude})

    @classmethod
    def compact_bump(cls, center=0.0, radius=0.5, amplitude=1.0):
        """Smooth bump ``A exp(1 - 1/(1 - s^2))`` with ``s = |z - center| / radius`` (Euclidean)."""
        center = complex(*center) if isinstance(center, (list, tuple)) else complex(center)
        if abs(center) + radius >= 1:
            raise ValueError("compact_bump support must lie inside the disk")

        def ev(z, x):
            s2 = np.abs(z - center) ** 2 / radius**2
            inside = s2 < 1.0
            safe = np.where(inside, 1.0 - s2, 1.0)
            return amplitude * np.where(inside, np.exp(1.0 - 1.0 / safe), 0.0)

        return cls(ev, decay_delta=np.inf,
                   profile={"profile": "compact_bump", "center": [center.real, center.imag],
                            "radius": radius, "amplitude": amplitude})

    def __add__(self, other: "ScalarField"):
        exact = None
        if self.xray_exact is not None and other.xray_exact is not None:
            def exact(beta, a):
                return self.xray_exact(beta, a) + other.xray_exact(beta, a)
        return ScalarField(lambda z, x: self.evaluator(z, x) + other.evaluator(z, x),
                           decay_delta=min(self.decay_delta, other.decay_delta), xray_exact=exact,
                           profile={"profile": "sum", "terms": [self.profile, other.profile]})


# ---------------------------------------------------------------------------
# transverse-traceless parts and iterated-tt tensors


@dataclass(frozen=True)
class TTComponent:
    """Holomorphic plus antiholomorphic differential of degree ``2k``."""

    degree: int
    plus: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    minus: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))

    def __post_init__(self):
        if self.degree <= 0 or self.degree % 2:
            raise ValueError("tt degree must be a positive even integer")
        for name in ("plus", "minus"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=complex))
            if not np.all(np.isfinite(arr)):
                raise ValueError("tt coefficients must be finite")
            object.__setattr__(self, name, arr)

    @property
    def k(self):
        return self.degree // 2

    @classmethod
    def real(cls, degree, plus):
        """Real tensor: the minus coefficients mirror the plus ones."""
        plus = np.asarray(plus, dtype=complex)
        return cls(degree, plus, np.conj(plus))

    def plus_value(self, z):
        return np.polynomial.polynomial.polyval(np.asarray(z, complex), self.plus)

    def minus_value(self, z):
        return np.polynomial.polynomial.polyval(np.conj(np.asarray(z, complex)), self.minus)

    def summability(self, delta, side="plus"):
        """Weighted sum ``sum_p |b_p|^2 B(2k - 2 delta - 1, p + 1)``.

        Finite for every finite coefficient list when ``2k - 2 delta - 1 > 0``;
        this is the quantity that controls membership of the differential in
        the weighted space ``x^delta L^2``.
        """
        coeffs = self.plus if side == "plus" else self.minus
        first = self.degree - 2.0 * delta - 1.0
        if first <= 0:
            return np.inf
        p = np.arange(coeffs.size)
        return float(np.sum(np.abs(coeffs) ** 2 * np.exp(betaln(first, p + 1.0))))


@dataclass(frozen=True)
class IttTensor:
    """Even-rank tensor ``f = sum_k L^{n-k} f_{2k}`` in iterated-tt form."""

    rank: int
    f0: ScalarField = field(default_factory=ScalarField.zero)
    components: tuple = ()

    def __post_init__(self):
        if self.rank < 0 or self.rank % 2:
            raise ValueError("rank must be a nonnegative even integer")
        comps = tuple(self.components)
        degrees = [c.degree for c in comps]
        if len(set(degrees)) != len(degrees):
            raise ValueError("duplicate tt degree")
        if any(d > self.rank for d in degrees):
            raise ValueError("tt degree exceeds the tensor rank")
        object.__setattr__(self, "components", tuple(sorted(comps, key=lambda c: c.degree)))

    @property
    def n(self):
        return self.rank // 2

    def component(self, k) -> TTComponent:
        """tt part of degree ``2k`` (zero if absent)."""
        for c in self.components:
            if c.k == k:
                return c
        return TTComponent(2 * k)

    def with_rank(self, rank):
        return IttTensor(rank, self.f0, self.components)


def ell_m(f: IttTensor, z, theta):
    """Evaluate the tensor on the unit vector ``(z, theta)``."""
    z = np.asarray(z, dtype=complex)
    theta = np.asarray(theta, dtype=float)
    out = f.f0(z) + 0j * theta
    c = c_factor(z)
    for comp in f.components:
        k = comp.k
        out = out + c ** (2 * k) * (np.exp(2j * k * theta) * comp.plus_value(z)
                                     + np.exp(-2j * k * theta) * comp.minus_value(z))
    return out


def fiber_mode(samples, k, axis=-1):
    """Coefficient of ``e^{ik theta}`` from uniform samples on ``[0, 2 pi)``.

    Trapezoid rule, exact for trigonometric polynomials of degree below
    ``N_theta / 2``.
    """
    samples = np.asarray(samples)
    n_theta = samples.shape[axis]
    if abs(k) >= n_theta / 2:
        warnings.warn(f"fiber mode {k} is aliased with {n_theta} samples", AliasingWarning, stacklevel=2)
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    kernel = np.exp(-1j * k * theta) / n_theta
    return np.tensordot(np.moveaxis(samples, axis, -1), kernel, axes=([-1], [0]))


def fiber_modes(samples, ks, axis=-1):
    """Dictionary ``{k: fiber_mode(samples, k)}``."""
    return {k: fiber_mode(samples, k, axis=axis) for k in ks}


def fiber_angles(n_theta):
    return 2.0 * np.pi * np.arange(n_theta) / n_theta


# ---------------------------------------------------------------------------
# component form


def frame_norm(m, k):
    """Squared norm of the frame element ``dz^k dzbar^(m-k) / c^m``: ``2^m / binom(m, k)``."""
    return 2.0**m / comb(m, k)


@dataclass(frozen=True)
class SymTensorField:
    """Rank-``m`` symmetric tensor in the frame ``dz^k dzbar^(m-k) / c^m``.

    ``components[k]`` holds the coefficient field (any trailing shape, usually
    samples at base points).
    """

    rank: int
    components: np.ndarray

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=complex)
        if comps.shape[0] != self.rank + 1:
            raise ValueError("need rank + 1 component fields")
        object.__setattr__(self, "components", comps)

    def mode_index(self, t):
        """Component index carrying fiber mode ``t`` (that is ``(m + t) / 2``)."""
        if (t + self.rank) % 2 or abs(t) > self.rank:
            raise ValueError(f"mode {t} does not occur in rank {self.rank}")
        return (self.rank + t) // 2

    def mode(self, t):
        """Fiber-mode-``t`` coefficient of the phase image (exact, no sampling)."""
        return self.components[self.mode_index(t)]

    def __add__(self, other):
        if self.rank != other.rank:
            raise ValueError("rank mismatch")
        return SymTensorField(self.rank, self.components + other.components)

    def __sub__(self, other):
        return self + other * (-1.0)

    def __mul__(self, scalar):
        return SymTensorField(self.rank, self.components * scalar)

    __rmul__ = __mul__


def phase_image(T: SymTensorField, theta):
    """Phase function ``sum_k F_k e^{i(2k-m) theta}``; ``theta`` is appended as the last axis."""
    theta = np.asarray(theta, dtype=float)
    m = T.rank
    out = 0j
    for k in range(m + 1):
        out = out + T.components[k][..., None] * np.exp(1j * (2 * k - m) * theta)
    return out


def ell_m_adjoint(modes, m):
    """Adjoint of the phase-image map for rank ``m``.

    ``modes`` maps each fiber mode ``t`` in ``-m..m`` (same parity as ``m``) to
    its coefficient field; missing modes count as zero. Component ``k`` of the
    result is ``2^{1-m} pi binom(m, k) h_{2k-m}``.
    """
    shape = np.shape(next(iter(modes.values()))) if modes else ()
    comps = np.zeros((m + 1,) + shape, dtype=complex)
    for k in range(m + 1):
        h = modes.get(2 * k - m)
        if h is not None:
            comps[k] = 2.0 ** (1 - m) * np.pi * comb(m, k) * np.asarray(h)
    return SymTensorField(m, comps)


def A_factor(m, k):
    """Scale factor of the frame automorphism on component ``k``: ``2^m / binom(m, k)``."""
    if not 0 <= k <= m:
        raise ValueError("component index out of range")
    return 2.0**m / comb(m, k)


def apply_A(T: SymTensorField) -> SymTensorField:
    """Apply the frame automorphism componentwise."""
    scale = np.array([A_factor(T.rank, k) for k in range(T.rank + 1)])
    return SymTensorField(T.rank, T.components * scale.reshape((-1,) + (1,) * (T.components.ndim - 1)))


def apply_L(T: SymTensorField, power=1) -> SymTensorField:
    """Symmetric multiplication by the metric ``power`` times.

    The metric is ``dz dzbar / c^2`` in the frame, so each factor shifts the
    component index by one and raises the rank by two; the phase image is
    unchanged.
    """
    if power < 0:
        raise ValueError("power must be nonnegative")
    if power == 0:
        return T
    m = T.rank
    comps = np.zeros((m + 2 * power + 1,) + T.components.shape[1:], dtype=complex)
    comps[power:power + m + 1] = T.components
    return SymTensorField(m + 2 * power, comps)


def project_Q(T: SymTensorField, t) -> SymTensorField:
    """Keep only the component carrying fiber mode ``t``."""
    comps = np.zeros_like(T.components)
    idx = T.mode_index(t)
    comps[idx] = T.components[idx]
    return SymTensorField(T.rank, comps)


def scalar_component_form(values, m=0) -> SymTensorField:
    """Scalar field as the rank-``m`` tensor ``L^{m/2} f``."""
    values = np.asarray(values, dtype=complex)
    return apply_L(SymTensorField(0, values[None]), m // 2)


def tt_component_form(comp: TTComponent, z, m, side="both") -> SymTensorField:
    """Rank-``m`` field ``L^{(m-2k)/2}`` applied to one tt part, sampled at ``z``.

    ``side`` selects the plus part, the minus part, or both.
    """
    k = comp.k
    z = np.asarray(z, dtype=complex)
    c = c_factor(z)
    comps = np.zeros((2 * k + 1,) + z.shape, dtype=complex)
    if side in ("both", "plus"):
        comps[2 * k] = c ** (2 * k) * comp.plus_value(z)
    if side in ("both", "minus"):
        comps[0] = c ** (2 * k) * comp.minus_value(z)
    return apply_L(SymTensorField(2 * k, comps), (m - 2 * k) // 2)


def itt_component_form(f: IttTensor, z, m=None) -> SymTensorField:
    """Component form of ``f`` (rank ``m``, default ``f.rank``) sampled at ``z``."""
    m = f.rank if m is None else m
    total = scalar_component_form(f.f0(z), m)
    for comp in f.components:
        total = total + tt_component_form(comp, z, m)
    return total
