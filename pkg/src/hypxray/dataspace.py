"""Functions on geodesic space: quadrature grid, orthonormal bases, range tests.

Geodesic space carries the measure ``d beta da``. The slope axis is
compactified by ``a = tan s`` so that grid functions are smooth and bounded
in ``s``; quadrature is uniform in ``beta`` and Gauss-Legendre in ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import betaln, roots_jacobi

from .fiber import IttTensor
from .forward import QuadratureSpec, ipq_closed, xray_tensor
from .geometry import Geodesic

PARITIES = ("even", "odd", "none")


class GridMismatch(ValueError):
    """Two sinograms live on different grids."""


@dataclass(frozen=True)
class GeodesicGrid:
    """Tensor-product grid on geodesic space.

    ``n_beta`` uniform angles times ``n_a`` Gauss-Legendre nodes in
    ``s`` mapped by ``a = tan s``; the weights include ``sec^2 s``.
    """

    n_beta: int = 64
    n_a: int = 96

    def __post_init__(self):
        if self.n_beta < 1 or self.n_a < 1:
            raise ValueError("grid sizes must be positive")

    @property
    def beta_nodes(self):
        return 2.0 * np.pi * np.arange(self.n_beta) / self.n_beta

    @property
    def beta_weight(self):
        return 2.0 * np.pi / self.n_beta

    @property
    def s_nodes_weights(self):
        x, w = np.polynomial.legendre.leggauss(self.n_a)
        return 0.5 * np.pi * x, 0.5 * np.pi * w

    @property
    def a_nodes(self):
        return np.tan(self.s_nodes_weights[0])

    @property
    def a_weights(self):
        s, ws = self.s_nodes_weights
        return ws / np.cos(s) ** 2

    @property
    def mesh(self):
        """``(beta, a)`` arrays of shape ``(n_beta, n_a)``."""
        return np.meshgrid(self.beta_nodes, self.a_nodes, indexing="ij")

    @property
    def weights(self):
        return self.beta_weight * np.broadcast_to(self.a_weights, (self.n_beta, self.n_a))

    @property
    def geodesics(self) -> Geodesic:
        B, A = self.mesh
        return Geodesic(B, A)

    def metadata(self):
        return {"n_beta": self.n_beta, "n_a": self.n_a, "a_map": "tan", "s_rule": "gauss-legendre"}

    def sample(self, fun, parity="even"):
        """Sinogram of ``fun(beta, a)`` on the grid."""
        B, A = self.mesh
        return Sinogram(self, np.asarray(fun(B, A), dtype=complex) * np.ones(B.shape), parity)


@dataclass(frozen=True)
class Sinogram:
    """Complex samples of a function on geodesic space."""

    grid: GeodesicGrid
    values: np.ndarray
    parity: str = "none"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.grid.n_beta, self.grid.n_a):
            raise ValueError(f"values shape {vals.shape} does not match the grid")
        if self.parity not in PARITIES:
            raise ValueError(f"parity must be one of {PARITIES}")
        object.__setattr__(self, "values", vals)

    def _check(self, other):
        if self.grid != other.grid:
            raise GridMismatch("sinograms are sampled on different grids")

    def __add__(self, other):
        self._check(other)
        parity = self.parity if self.parity == other.parity else "none"
        return Sinogram(self.grid, self.values + other.values, parity)

    def __sub__(self, other):
        return self + other * (-1.0)

    def __mul__(self, scalar):
        return Sinogram(self.grid, self.values * scalar, self.parity)

    __rmul__ = __mul__

    def conj(self):
        return Sinogram(self.grid, np.conj(self.values), self.parity)

    def norm(self):
        return float(np.sqrt(np.real(inner_product(self, self))))

    def antipodal_values(self):
        """Values at the antipodal image of each node, by trigonometric interpolation in beta.

        The map sends ``(beta, s)`` to ``(beta + pi + 2 s, -s)``; the
        Gauss-Legendre nodes are symmetric, so only a shift in beta is needed.
        """
        grid = self.grid
        s, _ = grid.s_nodes_weights
        coeffs = np.fft.fft(self.values[:, ::-1], axis=0) / grid.n_beta
        m = np.fft.fftfreq(grid.n_beta, d=1.0 / grid.n_beta)
        shift = np.pi + 2.0 * s
        phase = np.exp(1j * m[:, None] * shift[None, :])
        if grid.n_beta % 2 == 0:
            nyq = grid.n_beta // 2
            phase[nyq] = np.cos(nyq * shift)
        return np.fft.ifft(coeffs * phase, axis=0) * grid.n_beta

    def parity_defect(self):
        """Largest deviation from even parity, relative to the largest value."""
        scale = max(np.max(np.abs(self.values)), 1e-300)
        return float(np.max(np.abs(self.antipodal_values() - self.values)) / scale)

    def symmetrized(self):
        """Even part ``(h + h o S_A) / 2``."""
        return Sinogram(self.grid, 0.5 * (self.values + self.antipodal_values()), "even")


def inner_product(h1: Sinogram, h2: Sinogram):
    """``L^2`` pairing ``sum w h1 conj(h2)`` on the common grid."""
    h1._check(h2)
    return complex(np.sum(h1.grid.weights * h1.values * np.conj(h2.values)))


class SinogramInterpolant:
    """Spectral interpolant of a sinogram: trigonometric in beta, barycentric in s."""

    chunk = 4096

    def __init__(self, sino: Sinogram):
        grid = sino.grid
        self.grid = grid
        self.s_nodes, sw = grid.s_nodes_weights
        x = self.s_nodes / (0.5 * np.pi)
        # barycentric weights for Gauss-Legendre points
        lam = (-1.0) ** np.arange(grid.n_a) * np.sqrt((1.0 - x**2) * sw / (0.5 * np.pi))
        self.lam = lam
        self.coeffs = np.fft.fft(sino.values, axis=0) / grid.n_beta
        self.freqs = np.fft.fftfreq(grid.n_beta, d=1.0 / grid.n_beta)
        self.even_nyquist = grid.n_beta % 2 == 0

    def _s_matrix(self, s):
        diff = s[:, None] - self.s_nodes[None, :]
        exact = np.isclose(diff, 0.0, atol=1e-15)
        diff = np.where(exact, 1.0, diff)
        terms = self.lam[None, :] / diff
        mat = terms / np.sum(terms, axis=1, keepdims=True)
        rows = np.any(exact, axis=1)
        if np.any(rows):
            mat[rows] = exact[rows].astype(float)
        return mat

    def __call__(self, beta, a):
        beta, a = np.broadcast_arrays(np.asarray(beta, float), np.asarray(a, float))
        shape = beta.shape
        beta, s = beta.ravel(), np.arctan(a.ravel())
        out = np.empty(beta.size, dtype=complex)
        for start in range(0, beta.size, self.chunk):
            sl = slice(start, start + self.chunk)
            cols = self._s_matrix(s[sl]) @ self.coeffs.T  # (pts, n_beta) Fourier coefficients
            phase = np.exp(1j * beta[sl, None] * self.freqs[None, :])
            if self.even_nyquist:
                nyq = self.grid.n_beta // 2
                phase[:, nyq] = np.cos(nyq * beta[sl])
            out[sl] = np.sum(cols * phase, axis=1)
        return out.reshape(shape)


# ---------------------------------------------------------------------------
# Jacobi basis


@dataclass(frozen=True)
class BasisIndex:
    """Index ``(n, k)`` of the orthonormal basis (weight exponent gamma fixed to 0)."""

    n: int
    k: int
    gamma: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be nonnegative")
        if self.gamma != 0:
            raise NotImplementedError("only gamma = 0 is supported")

    @property
    def d_beta_eigenvalue(self):
        return self.n - 2 * self.k

    @property
    def t0_eigenvalue(self):
        return (self.n + 1) ** 2

    @property
    def sigma(self):
        """Singular value ``2 sqrt(pi) / sqrt(n + 1)`` of the scalar transform on this mode."""
        return 2.0 * np.sqrt(np.pi) / np.sqrt(self.n + 1.0)


def _jacobi_half_raw(nmax, x):
    """Unnormalized ``P_n^{(1/2,1/2)}(x)`` for ``n = 0..nmax`` by the three-term recurrence."""
    al = be = 0.5
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = 0.5 * (al - be) + 0.5 * (al + be + 2.0) * x
    for n in range(2, nmax + 1):
        s = 2 * n + al + be
        c1 = 2 * n * (n + al + be) * (s - 2)
        c2 = (s - 1) * (s * (s - 2) * x + al**2 - be**2)
        c3 = 2 * (n + al - 1) * (n + be - 1) * s
        out[n] = (c2 * out[n - 1] - c3 * out[n - 2]) / c1
    return out


@lru_cache(maxsize=None)
def _jacobi_scale(n):
    """Scale making ``int p_n^2 sqrt(1 - x^2) dx = 1 / (2 pi)``, from one Gauss-Jacobi rule."""
    x, w = roots_jacobi(n + 2, 0.5, 0.5)
    h = float(np.sum(w * _jacobi_half_raw(n, x)[n] ** 2))
    return 1.0 / np.sqrt(2.0 * np.pi * h)


def jacobi_all(nmax, x):
    """Normalized ``p_0..p_nmax`` at ``x`` stacked along the first axis."""
    raw = _jacobi_half_raw(nmax, x)
    scale = np.array([_jacobi_scale(n) for n in range(nmax + 1)])
    return raw * scale.reshape((-1,) + (1,) * np.ndim(x))


def jacobi_p(n, x, gamma=0):
    """Normalized Jacobi polynomial ``p_n`` with ``int p_n^2 (1-x^2)^{1/2} dx = 1/(2 pi)``."""
    if gamma != 0:
        raise NotImplementedError("only gamma = 0 is supported")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + 1e-14):
        raise ValueError("jacobi_p needs |x| <= 1")
    return jacobi_all(n, x)[n]


def psi(idx, g: Geodesic):
    """Basis function ``mu^2 e^{i(n-2k) omega} p_n(a mu)`` on geodesic space."""
    if not isinstance(idx, BasisIndex):
        idx = BasisIndex(*idx)
    mu = g.mu
    return mu**2 * np.exp(1j * idx.d_beta_eigenvalue * g.omega) * jacobi_p(idx.n, np.asarray(g.a) * mu)


def psi_table(n_max, g: Geodesic, k_window=None):
    """All ``psi_{n,k}`` for ``n <= n_max`` as a dict keyed by ``(n, k)``.

    ``k_window(n)`` returns the range of ``k``; the default is ``0..n``.
    """
    mu = g.mu
    P = jacobi_all(n_max, np.asarray(g.a) * mu)
    E = np.exp(1j * g.omega)
    out = {}
    for n in range(n_max + 1):
        ks = range(n + 1) if k_window is None else k_window(n)
        for k in ks:
            out[(n, k)] = mu**2 * E ** (n - 2 * k) * P[n]
    return out


def psi_sinogram(n, k, grid: GeodesicGrid):
    return Sinogram(grid, psi((n, k), grid.geodesics), "even")


# ---------------------------------------------------------------------------
# tt range family


def ipq_norm_sq(p, q):
    """Analytic ``||I_{p,q}||^2 = 4 pi^2 B(1/2, q) 4^{1-q} B(p+1, 2q-1)``."""
    return 4.0 * np.pi**2 * np.exp(betaln(0.5, q) + (1 - q) * np.log(4.0) + betaln(p + 1.0, 2.0 * q - 1.0))


def ipq_hat(p, q, grid: GeodesicGrid):
    """Normalized range element ``I_{p,q} / ||I_{p,q}||`` on the grid."""
    return Sinogram(grid, ipq_closed(p, q, grid.geodesics) / np.sqrt(ipq_norm_sq(p, q)), "even")


@dataclass
class Projection:
    """Result of an orthogonal projection: projected sinogram plus coefficients."""

    projected: Sinogram
    coeffs: dict
    conj_coeffs: dict = field(default_factory=dict)


def project_Pi(h: Sinogram, q, cutoff=12):
    """Orthogonal projection onto one block of the data-space decomposition.

    ``q = 0``: the scalar range, expanded in ``psi_{n,k}``, ``0 <= k <= n <= cutoff``.
    ``q >= 1``: the degree-``2q`` tt range, expanded in ``Ihat_{p,2q}`` and their
    conjugates, ``p <= cutoff``.
    """
    grid = h.grid
    W = grid.weights
    total = np.zeros_like(h.values)
    if q == 0:
        coeffs = {}
        for key, basis in psi_table(cutoff, grid.geodesics).items():
            c = complex(np.sum(W * h.values * np.conj(basis)))
            coeffs[key] = c
            total = total + c * basis
        return Projection(Sinogram(grid, total, h.parity), coeffs)
    coeffs, conj_coeffs = {}, {}
    for p in range(cutoff + 1):
        basis = ipq_hat(p, 2 * q, grid).values
        u = complex(np.sum(W * h.values * np.conj(basis)))
        v = complex(np.sum(W * h.values * basis))
        coeffs[p], conj_coeffs[p] = u, v
        total = total + u * basis + v * np.conj(basis)
    return Projection(Sinogram(grid, total, h.parity), coeffs, conj_coeffs)


# ---------------------------------------------------------------------------
# spectral data and range tests


@dataclass
class SpectralData:
    """Coefficients ``c[n, k] = <h, psi_{n,k}>`` for ``0 <= k <= n <= n_max``."""

    n_max: int
    c: np.ndarray
    norm_sq: float

    @property
    def sigma(self):
        n = np.arange(self.n_max + 1)
        return 2.0 * np.sqrt(np.pi) / np.sqrt(n + 1.0)

    @property
    def a(self):
        """Rescaled coefficients ``a[n, k] = c[n, k] / sigma_n``."""
        return self.c / self.sigma[:, None]

    @property
    def mask(self):
        n = np.arange(self.n_max + 1)
        return n[None, :] <= n[:, None]

    @property
    def captured_energy(self):
        return float(np.sum(np.abs(self.c[self.mask]) ** 2))

    @property
    def tail_energy(self):
        """``||h||^2`` minus the captured energy (nonnegative up to quadrature error)."""
        return self.norm_sq - self.captured_energy


def spectral_coeffs(h: Sinogram, n_max=12):
    """Coefficients of ``h`` against the scalar-range basis."""
    W = h.grid.weights
    c = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    for (n, k), basis in psi_table(n_max, h.grid.geodesics).items():
        c[n, k] = np.sum(W * h.values * np.conj(basis))
    return SpectralData(n_max, c, h.norm() ** 2)


@dataclass
class MomentReport:
    """Outcome of the moment test above a declared rank."""

    n: int
    q_max: int
    p_max: int
    max_violation: float
    worst: tuple | None
    tolerance: float
    scale: float

    @property
    def passed(self):
        return self.max_violation <= self.tolerance * self.scale

    def to_dict(self):
        return {"n": self.n, "q_max": self.q_max, "p_max": self.p_max,
                "max_violation": self.max_violation, "worst": self.worst,
                "tolerance": self.tolerance, "scale": self.scale, "passed": self.passed}


def moment_test(h: Sinogram, n, q_max=None, p_max=12, tol=1e-5):
    """Largest pairing of ``h`` with ``Ihat_{p,2q}`` or its conjugate for ``n < q <= q_max``.

    Passes when that maximum is at most ``tol * max(1, ||h||)``.
    """
    q_max = n + 2 if q_max is None else q_max
    W = h.grid.weights
    worst, worst_at = 0.0, None
    for q in range(n + 1, q_max + 1):
        for p in range(p_max + 1):
            basis = ipq_hat(p, 2 * q, h.grid).values
            for side, val in (("plus", np.sum(W * h.values * np.conj(basis))),
                              ("minus", np.sum(W * h.values * basis))):
                if abs(val) > worst:
                    worst, worst_at = float(abs(val)), (p, q, side)
    return MomentReport(n, q_max, p_max, worst, worst_at, tol, max(1.0, h.norm()))


@dataclass
class DecayReport:
    """Spectral tail test: fraction of weighted energy in the upper half of the index range."""

    label: str
    total: float
    tail_fraction: float
    threshold: float
    floor: float

    @property
    def passed(self):
        return self.total <= self.floor or self.tail_fraction <= self.threshold

    def to_dict(self):
        return {"label": self.label, "total": self.total, "tail_fraction": self.tail_fraction,
                "threshold": self.threshold, "floor": self.floor, "passed": self.passed}


def tt_decay_test(h: Sinogram, n, p_max=12, delta=0.5, threshold=0.05, floor=1e-10):
    """Decay of the tt-range coefficients for ``1 <= q <= n`` in the weighted sequence norm.

    Energies are weighted by ``(p+1)^{2 delta}``; the test fails when more
    than ``threshold`` of the weighted energy sits at ``p > p_max / 2``.
    """
    reports = []
    for q in range(1, n + 1):
        proj = project_Pi(h, q, p_max)
        p = np.arange(p_max + 1)
        e = np.array([abs(proj.coeffs[i]) ** 2 + abs(proj.conj_coeffs[i]) ** 2 for i in p]) * (p + 1.0) ** (2 * delta)
        total = float(e.sum())
        tail = float(e[p > p_max / 2].sum() / total) if total > 0 else 0.0
        reports.append(DecayReport(f"q={q}", total, tail, threshold, floor))
    return reports


def scalar_decay_test(h: Sinogram, n_max=12, threshold=0.05, floor=1e-10):
    """Decay of ``sum |a_{n,k}|^2`` for the scalar range (weight exponent 0)."""
    spec = spectral_coeffs(h, n_max)
    energy = np.sum(np.abs(spec.a) ** 2 * spec.mask, axis=1)
    total = float(energy.sum())
    n = np.arange(n_max + 1)
    tail = float(energy[n > n_max / 2].sum() / total) if total > 0 else 0.0
    return DecayReport("scalar", total, tail, threshold, floor)


# ---------------------------------------------------------------------------
# differential operators by finite differences


def _along_flow(h, beta, a, step):
    """Samples of ``h`` along ``(beta + e, s - e)`` for ``e`` in ``{-2, -1, 0, 1, 2} * step``."""
    s = np.arctan(a)
    return [h(beta + j * step, np.tan(s - j * step)) for j in (-2, -1, 0, 1, 2)]


def apply_T0_fd(h, g: Geodesic, step=2e-3):
    """Fourth-order finite-difference evaluation of the second-order operator ``T0``.

    With ``V = d/dbeta - (1 + a^2) d/da`` (which is ``d/dbeta - d/ds``),
    ``T0 = -V^2 + 2 a V - (2 a^2 + 1)``.
    """
    beta, a = np.asarray(g.beta, float), np.asarray(g.a, float)
    f = _along_flow(h, beta, a, step)
    d1 = (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / (12 * step)
    d2 = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * step**2)
    return -d2 + 2 * a * d1 - (2 * a**2 + 1) * f[2]


def apply_D_beta_fd(h, g: Geodesic, step=1e-3):
    """Fourth-order finite difference of ``D_beta = -i d/dbeta``."""
    beta, a = np.asarray(g.beta, float), np.asarray(g.a, float)
    f = [h(beta + j * step, a) for j in (-2, -1, 1, 2)]
    return -1j * (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * step)


# ---------------------------------------------------------------------------
# forward sinograms


def forward_sinogram(f: IttTensor, grid: GeodesicGrid, quad: QuadratureSpec = QuadratureSpec(),
                     workers=1, use_exact_scalar=True):
    """Sample the transform of an iterated-tt tensor on the grid."""
    return Sinogram(grid, xray_tensor(f, grid.geodesics, quad, workers, use_exact_scalar), "even")


# ---------------------------------------------------------------------------
# combined range report


@dataclass
class RangeReport:
    """Moment, tt-decay and scalar-decay tests for a declared rank ``2n``."""

    n: int
    moment: MomentReport
    tt_decay: list
    scalar_decay: DecayReport

    @property
    def passed(self):
        return self.moment.passed and all(r.passed for r in self.tt_decay) and self.scalar_decay.passed

    def conditions(self):
        """``{condition: passed}`` for the moment test and the two decay tests."""
        return {"moments": self.moment.passed,
                "tt_decay": all(r.passed for r in self.tt_decay),
                "scalar_decay": self.scalar_decay.passed}

    def to_dict(self):
        return {"rank": 2 * self.n, "passed": self.passed, "conditions": self.conditions(),
                "moment": self.moment.to_dict(), "tt_decay": [r.to_dict() for r in self.tt_decay],
                "scalar_decay": self.scalar_decay.to_dict()}


def range_report(h: Sinogram, n, p_max=12, n_max=12, moment_tol=1e-5, threshold=0.05, floor=1e-10):
    """Run every range test on ``h`` for declared rank ``2n``."""
    return RangeReport(n, moment_test(h, n, p_max=p_max, tol=moment_tol),
                       tt_decay_test(h, n, p_max, threshold=threshold, floor=floor),
                       scalar_decay_test(h, n_max, threshold, floor))
