"""Numbered acceptance checks shared by the test suite and ``hypxray selftest``.

Every check takes a :class:`~hypxray.io.RunConfig` and returns a
:class:`CheckResult` holding one :class:`Measurement` per quantity it
compares against a tolerance.
"""

from __future__ import annotations

import contextlib
import io
import json
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import betaln

from .dataspace import (
    apply_D_beta_fd,
    apply_T0_fd,
    forward_sinogram,
    ipq_hat,
    moment_test,
    psi,
    psi_table,
)
from .fiber import IttTensor, ScalarField, TTComponent, apply_A
from .forward import (
    ipq_closed,
    right_inverse_lift,
    santalo_lhs,
    santalo_rhs,
    xray_numeric_pq,
    xray_phase,
    xray_scalar,
)
from .geometry import Geodesic, apply_X, c_factor, mu_hat
from .io import RunConfig, make_phantom, write_sinogram
from .reconstruct import (
    TruncationWarning,
    apply_normal,
    invert_normal,
    recover_all_tt,
    recover_f0_spectral,
    relative_l2,
)


@dataclass
class Measurement:
    label: str
    measured: object
    expected: object
    tol: object
    passed: bool

    def line(self):
        def fmt(v):
            return f"{v:.3e}" if isinstance(v, float) else str(v)
        return (f"{'ok  ' if self.passed else 'FAIL'} {self.label}: measured {fmt(self.measured)}, "
                f"expected {fmt(self.expected)}, tol {fmt(self.tol)}")

    def to_dict(self):
        def conv(v):
            return float(v) if isinstance(v, (float, np.floating)) else v
        return {"label": self.label, "measured": conv(self.measured), "expected": conv(self.expected),
                "tol": conv(self.tol), "passed": bool(self.passed)}


def bound(label, measured, tol, expected=0.0):
    """Measurement that passes when ``measured <= tol``."""
    measured = float(measured)
    return Measurement(label, measured, expected, tol, bool(measured <= tol))


@dataclass
class CheckResult:
    number: int
    name: str
    items: list
    seconds: float = 0.0
    error: str | None = None

    @property
    def passed(self):
        return self.error is None and bool(self.items) and all(m.passed for m in self.items)

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d} {self.name} ({self.seconds:.1f} s)"

    def to_dict(self):
        return {"number": self.number, "name": self.name, "passed": self.passed, "seconds": self.seconds,
                "error": self.error, "items": [m.to_dict() for m in self.items]}


@dataclass
class Check:
    number: int
    name: str
    tags: tuple
    run: object = field(repr=False)

    def matches(self, selector):
        return selector is None or selector == self.name or selector in self.tags or selector == str(self.number)

    def __call__(self, cfg: RunConfig) -> CheckResult:
        start = time.perf_counter()
        try:
            items, error = self.run(cfg), None
        except Exception as exc:  # reported as a failed check, never swallowed silently
            items, error = [], f"{type(exc).__name__}: {exc}"
        return CheckResult(self.number, self.name, items, time.perf_counter() - start, error)


def _sample_grid(n_beta, a_values, offset=0.0):
    beta = offset + 2.0 * np.pi * np.arange(n_beta) / n_beta
    B, A = np.meshgrid(beta, np.asarray(a_values, float), indexing="ij")
    return Geodesic(B, A)


def _coeff_error(got: TTComponent, want: TTComponent):
    size = max(got.plus.size, want.plus.size, got.minus.size, want.minus.size)

    def pad(v):
        return np.pad(v, (0, size - v.size))

    return float(max(np.max(np.abs(pad(got.plus) - pad(want.plus))),
                     np.max(np.abs(pad(got.minus) - pad(want.minus)))))


# ---------------------------------------------------------------------------
# the checks


def check_weight_transform(cfg):
    g = _sample_grid(7, np.linspace(-3.0, 3.0, 7))
    items = []
    for alpha in (0.5, 1.0, 2.0, 3.0):
        f = ScalarField(lambda z, x, alpha=alpha: x**alpha, decay_delta=alpha)
        numeric = xray_scalar(f, g, cfg.quad)
        exact = np.exp(betaln(alpha / 2.0, 0.5)) * mu_hat(g.a) ** alpha
        items.append(bound(f"alpha={alpha}", np.max(np.abs(numeric - exact) / np.abs(exact)), 1e-6))
    return items


def check_closed_form(cfg):
    g = _sample_grid(5, np.linspace(-2.0, 2.0, 5), offset=0.3)
    worst, where = 0.0, None
    for p in range(7):
        for q in range(1, 5):
            closed = ipq_closed(p, q, g)
            numeric = xray_numeric_pq(p, q, g, cfg.quad)
            err = float(np.max(np.abs(numeric - closed)) / np.max(np.abs(closed)))
            if err >= worst:
                worst, where = err, (p, q)
    return [bound(f"max relative error over p<=6, q<=4 (worst at p,q={where})", worst, 1e-8)]


def check_orthonormality(cfg):
    grid = cfg.grid
    W = grid.weights.ravel()
    g = grid.geodesics
    psis = np.array([v.ravel() for v in psi_table(8, g).values()])
    ipqs = []
    for q in range(1, 4):
        for p in range(7):
            v = ipq_hat(p, 2 * q, grid).values.ravel()
            ipqs.extend([v, np.conj(v)])
    ipqs = np.array(ipqs)

    def gram(U, V):
        return (U * W) @ V.conj().T

    return [
        bound("psi Gram deviation from identity", np.max(np.abs(gram(psis, psis) - np.eye(len(psis)))), 1e-6),
        bound("Ihat Gram deviation from identity", np.max(np.abs(gram(ipqs, ipqs) - np.eye(len(ipqs)))), 1e-6),
        bound("psi/Ihat cross block", np.max(np.abs(gram(psis, ipqs))), 1e-6),
    ]


def check_norm_law(cfg):
    grid = cfg.grid
    worst = 0.0
    for q in range(1, 4):
        for p in range(7):
            values = ipq_closed(p, 2 * q, grid.geodesics)
            measured = float(np.sum(grid.weights * np.abs(values) ** 2))
            formula = 4 * np.pi**2 * np.exp(betaln(0.5, 2 * q) + betaln(p + 1.0, 4 * q - 1.0)) * 4.0 ** (1 - 2 * q)
            worst = max(worst, abs(measured - formula) / formula)
    spot = float(np.sum(grid.weights * np.abs(ipq_closed(0, 2, grid.geodesics)) ** 2))
    return [bound("max relative norm error, p<=6, q<=3", worst, 1e-6),
            bound("||I_{0,2}||^2 against 4 pi^2 / 9", abs(spot - 4 * np.pi**2 / 9) / (4 * np.pi**2 / 9), 1e-6)]


def _bump(z, center, radius):
    s2 = np.abs(z - center) ** 2 / radius**2
    inside = s2 < 1.0
    return np.where(inside, np.exp(1.0 - 1.0 / np.where(inside, 1.0 - s2, 1.0)), 0.0)


SANTALO_RADIUS = 0.5

SANTALO_FUNCTIONS = {
    "radial bump with cos(theta) modulation": lambda z, th, x: _bump(z, 0.0, 0.5) * (1.0 + 0.5 * np.cos(th)),
    "off-center complex bump": lambda z, th, x: (_bump(z, 0.1 + 0.1j, 0.35) * (1.0 + z * np.exp(-1j * th))
                                                 * (1.5 + np.cos(2 * th))),
    "weighted bump with exp(sin theta)": lambda z, th, x: _bump(z, 0.0, 0.5) * np.abs(z) ** 2 * np.exp(np.sin(th)),
}


def check_santalo(cfg):
    items = []
    for label, F in SANTALO_FUNCTIONS.items():
        lhs = santalo_lhs(F, SANTALO_RADIUS)
        rhs = santalo_rhs(F, SANTALO_RADIUS, cfg.quad)
        items.append(bound(label, abs(lhs - rhs) / abs(lhs), 1e-4))
    return items


KERNEL_CENTER, KERNEL_RADIUS = 0.1, 0.6


def _one_form(z):
    """Compactly supported 1-form ``q1 du1 + q2 du2`` and its Euclidean partials."""
    u1 = np.real(z)
    d = z - KERNEL_CENTER
    s2 = np.abs(d) ** 2 / KERNEL_RADIUS**2
    inside = s2 < 1.0
    safe = np.where(inside, 1.0 - s2, 1.0)
    b = np.where(inside, np.exp(1.0 - 1.0 / safe), 0.0)
    db_ds2 = np.where(inside, -b / safe**2, 0.0)
    b1 = db_ds2 * 2.0 * np.real(d) / KERNEL_RADIUS**2
    b2 = db_ds2 * 2.0 * np.imag(d) / KERNEL_RADIUS**2
    # q1 = b, q2 = b * u1
    return (b, b1, b2), (b * u1, b1 * u1 + b, b2 * u1)


def _lifted_one_form(z, theta, x=None):
    (q1, _, _), (q2, _, _) = _one_form(z)
    return c_factor(z) * (q1 * np.cos(theta) + q2 * np.sin(theta))


def _lifted_one_form_grad(z, theta):
    (q1, q11, q12), (q2, q21, q22) = _one_form(z)
    c = c_factor(z)
    cos, sin = np.cos(theta), np.sin(theta)
    inner = q1 * cos + q2 * sin
    d1 = -np.real(z) * inner + c * (q11 * cos + q21 * sin)
    d2 = -np.imag(z) * inner + c * (q12 * cos + q22 * sin)
    dth = c * (-q1 * sin + q2 * cos)
    return d1, d2, dth


def check_kernel_vanishing(cfg):
    g = _sample_grid(7, np.linspace(-2.0, 2.0, 7))
    flow = xray_phase(lambda z, th, x: apply_X(_lifted_one_form_grad, z, th), g, cfg.quad, np.inf)
    plain = xray_phase(_lifted_one_form, g, cfg.quad, np.inf)
    return [bound(f"max |I(X l_1 q)| (max |I(l_1 q)| = {np.max(np.abs(plain)):.3f})", np.max(np.abs(flow)), 1e-6)]


RIGHT_INVERSE_DATA = {
    "exp(-a^2)(1 + cos(beta)/2)": lambda beta, a: np.exp(-(a**2)) * (1.0 + 0.5 * np.cos(beta)),
    "sin(2 beta)/(1 + a^2) + 0.3": lambda beta, a: np.sin(2 * beta) / (1.0 + a**2) + 0.3,
}


def check_right_inverse(cfg):
    g = _sample_grid(7, np.linspace(-2.5, 2.5, 7), offset=0.2)
    items = []
    for alpha in (1.0, 2.0):
        for label, h in RIGHT_INVERSE_DATA.items():
            got = xray_phase(right_inverse_lift(h, alpha), g, cfg.quad, alpha)
            items.append(bound(f"alpha={alpha}, h={label}", np.max(np.abs(got - h(g.beta, g.a))), 1e-6))
    return items


def check_peeling(cfg):
    f = make_phantom("mixed-rank4")
    data = forward_sinogram(f, cfg.grid, cfg.quad, use_exact_scalar=False)
    result = recover_all_tt(data, f.n, cfg.p_max)
    coeff_err = max(_coeff_error(c, f.component(c.k)) for c in result.components)
    scalar_only = forward_sinogram(IttTensor(0, f.f0), cfg.grid, cfg.quad, use_exact_scalar=False)
    remainder_err = np.max(np.abs(result.remainder.values - scalar_only.values))
    moment = moment_test(result.remainder, 0, p_max=cfg.p_max, tol=cfg.moment_tol)
    increase = max(0.0, max(b - a for a, b in zip(result.residuals, result.residuals[1:])))
    return [bound("tt coefficient error", coeff_err, 1e-4),
            bound("remainder against scalar transform", remainder_err, 1e-4),
            bound("remainder moment violation at rank 0 (scaled)", moment.max_violation / moment.scale, cfg.moment_tol),
            bound("largest residual increase between stages", increase, 0.0)]


SCALAR_PHANTOMS = {
    "compact radial bump, radius 0.5": lambda: ScalarField.compact_bump(0.0, 0.5),
    "off-center hyperbolic Gaussian": lambda: ScalarField.gaussian_bump(0.2 + 0.1j, 0.4),
}


def check_scalar_reconstruction(cfg):
    base = cfg.base
    items = []
    for label, make in SCALAR_PHANTOMS.items():
        f0 = make()
        data = forward_sinogram(IttTensor(0, f0), cfg.grid, cfg.quad)
        truth = f0(base.z)
        errors = []
        for n_max in (8, 16, 24):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TruncationWarning)
                rec = recover_f0_spectral(data, n_max, base.z, cfg.n_theta)
            errors.append(relative_l2(rec, truth, base.volume_weights))
        items.append(bound(f"{label}: relative L2 error at n_max=24", errors[-1], 0.05))
        steps = sum(1 for a, b in zip(errors, errors[1:]) if b >= a)
        items.append(Measurement(f"{label}: errors {['%.2e' % e for e in errors]} decrease", steps == 0,
                                 True, "strict", steps == 0))
    return items


def _triangularity_error(base, n_theta):
    worst = 0.0
    for m in (2, 4):
        for degree in range(2, m + 1, 2):
            for p in range(3):
                gen = TTComponent(degree, np.eye(p + 1)[p], [0.0])
                T = apply_A(apply_normal(IttTensor(m, components=(gen,)), base, n_theta))
                diag = 2.0 * np.exp(betaln(0.5, degree)) * c_factor(base.z) ** degree * base.z**p
                for kp in range(0, degree + 1, 2):
                    expected = diag if kp == degree else 0.0
                    worst = max(worst, float(np.max(np.abs(T.mode(kp) / (2 * np.pi) - expected))))
    return worst


def check_normal_operator(cfg):
    base, nth = cfg.base, cfg.n_theta
    kw = dict(scalar_degree=cfg.scalar_degree, n_theta=nth, cg_tol=cfg.cg_tol, cg_maxiter=cfg.cg_maxiter)
    items = [bound("triangularity entries, m=2,4", _triangularity_error(base, nth), 1e-5)]

    pure_tt = IttTensor(2, components=(TTComponent.real(2, [1.0]),))
    rec, _ = invert_normal(apply_normal(pure_tt, base, nth), base, **kw)
    items.append(bound("pure tt: coefficient error", _coeff_error(rec.component(1), pure_tt.component(1)), 1e-3))
    items.append(bound("pure tt: recovered scalar part (sup)", np.max(np.abs(rec.f0(base.z))), 1e-3))

    pure_scalar = IttTensor(2, ScalarField.gaussian_bump(0.0, 0.5))
    rec, _ = invert_normal(apply_normal(pure_scalar, base, nth), base, **kw)
    items.append(bound("pure scalar: tt coefficients", _coeff_error(rec.component(1), TTComponent(2)), 1e-4))
    items.append(bound("pure scalar: relative L2 error",
                       relative_l2(rec.f0(base.z), pure_scalar.f0(base.z), base.volume_weights), 0.05))

    mixed = make_phantom("rank2-mixed")
    xray_path = recover_all_tt(forward_sinogram(mixed, cfg.grid, cfg.quad), 1, cfg.p_max).components[0]
    normal_path, _ = invert_normal(apply_normal(mixed, base, nth), base, **kw)
    items.append(bound("cross-method agreement on the degree-2 part",
                       _coeff_error(normal_path.component(1), xray_path), 2e-3))
    return items


def check_spectral_eigen(cfg):
    g = _sample_grid(5, np.linspace(-1.5, 1.5, 5), offset=0.4)
    d_err, t_err = 0.0, 0.0
    for n in range(5):
        for k in range(n + 1):
            def h(beta, a, n=n, k=k):
                return psi((n, k), Geodesic(beta, a))

            ref = h(g.beta, g.a)
            scale = np.max(np.abs(ref))
            d_err = max(d_err, np.max(np.abs(apply_D_beta_fd(h, g) - (n - 2 * k) * ref)) / scale)
            t_err = max(t_err, np.max(np.abs(apply_T0_fd(h, g) - (n + 1) ** 2 * ref)) / ((n + 1) ** 2 * scale))
    return [bound("D_beta eigenvalue n-2k (relative)", d_err, 1e-6),
            bound("T0 eigenvalue (n+1)^2 (relative)", t_err, 1e-4)]


def check_range_characterization(cfg):
    # runs the rangecheck verb itself, so the CSV round trip and exit status are part of the check
    from .cli import main

    items = []
    with tempfile.TemporaryDirectory() as tmp:
        config = Path(tmp) / "config.json"
        config.write_text(json.dumps(cfg.to_dict()))
        for name in ("rank2-mixed", "mixed-rank4"):
            f = make_phantom(name)
            csv = Path(tmp) / f"{name}.csv"
            write_sinogram(forward_sinogram(f, cfg.grid, cfg.quad, use_exact_scalar=False), csv)
            for n, want in ((f.n, True), (f.n - 1, False)):
                report = Path(tmp) / f"{name}-{n}.json"
                with contextlib.redirect_stdout(io.StringIO()):
                    status = main(["rangecheck", str(csv), "--rank", str(2 * n), "--config", str(config),
                                   "--out", str(report)])
                got = status == 0
                conditions = json.loads(report.read_text())["conditions"]
                items.append(Measurement(f"{name} declared rank {2 * n}: {conditions}",
                                         "PASS" if got else "FAIL", "PASS" if want else "FAIL", "-", got == want))
    return items


CHECKS = [
    Check(1, "weight_transform", ("forward", "quadrature"), check_weight_transform),
    Check(2, "closed_form", ("forward", "quadrature"), check_closed_form),
    Check(3, "orthonormality", ("orthogonality", "dataspace"), check_orthonormality),
    Check(4, "norm_law", ("dataspace", "norms"), check_norm_law),
    Check(5, "santalo", ("forward", "phase_space"), check_santalo),
    Check(6, "kernel_vanishing", ("forward", "phase_space"), check_kernel_vanishing),
    Check(7, "right_inverse", ("forward", "phase_space"), check_right_inverse),
    Check(8, "peeling", ("reconstruct", "xray"), check_peeling),
    Check(9, "scalar_reconstruction", ("reconstruct", "xray"), check_scalar_reconstruction),
    Check(10, "normal_operator", ("reconstruct", "normal"), check_normal_operator),
    Check(11, "spectral_eigen", ("dataspace", "spectral"), check_spectral_eigen),
    Check(12, "range_characterization", ("dataspace", "range"), check_range_characterization),
]


def select(selector=None):
    """Checks whose number, name or tag equals ``selector`` (all when ``None``)."""
    return [c for c in CHECKS if c.matches(selector)]
