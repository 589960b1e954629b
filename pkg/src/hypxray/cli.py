"""Command-line interface: ``hypxray {phantom,forward,reconstruct,rangecheck,selftest}``.

Exit status is 0 on success, 1 when a check, range test or solver fails,
and 2 for malformed input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .checks import select
from .dataspace import SinogramInterpolant, forward_sinogram, moment_test, range_report
from .forward import NonConvergent
from .io import (
    InputError,
    RunConfig,
    file_sha256,
    load_tensor,
    make_phantom,
    read_sinogram,
    save_tensor,
    write_sinogram,
)
from .fiber import IttTensor
from .reconstruct import (
    CGNonConvergence,
    KleinBasis,
    ReconReport,
    TruncationWarning,
    backproject,
    invert_normal,
    recover_all_tt,
    recover_f0_spectral,
)

log = logging.getLogger("hypxray")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _parse_param(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise InputError(f"--param expects key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


# ---------------------------------------------------------------------------
# verbs


def cmd_phantom(args, cfg):
    params = dict(_parse_param(p) for p in args.param)
    f = make_phantom(args.name, **params)
    out = args.out or f"{args.name}.json"
    save_tensor(f, out)
    print(f"phantom {args.name} (rank {f.rank}, tt degrees {[c.degree for c in f.components]}) -> {out}")
    return EXIT_OK


def cmd_forward(args, cfg):
    f = load_tensor(args.spec)
    sino = forward_sinogram(f, cfg.grid, cfg.quad, workers=args.workers)
    out = args.out or str(Path(args.spec).with_suffix(".csv"))
    meta = {"rank": f.rank, "quadrature": {"rel_tol": cfg.rel_tol, "abs_tol": cfg.abs_tol, "t_max": cfg.t_max},
            "spec_path": str(args.spec), "spec_sha256": file_sha256(args.spec)}
    write_sinogram(sino, out, meta)
    print(f"sinogram {cfg.n_beta} x {cfg.n_a} (norm {sino.norm():.6g}) -> {out}")
    return EXIT_OK


def _scalar_fit(samples, cfg):
    """Least-squares Klein expansion of scalar samples on the base grid."""
    base = cfg.base
    basis = KleinBasis(cfg.scalar_degree)
    sw = np.sqrt(base.volume_weights)
    coeffs, *_ = np.linalg.lstsq(basis.values(base.z) * sw[:, None], samples * sw, rcond=None)
    return basis.field(coeffs)


def cmd_reconstruct(args, cfg):
    if args.rank is None or args.rank < 0 or args.rank % 2:
        raise InputError("--rank must be a nonnegative even integer")
    sino = read_sinogram(args.sinogram)
    if sino.parity != "even":
        raise InputError("reconstruction needs an even-parity sinogram")
    n = args.rank // 2
    moments = moment_test(sino, n, p_max=cfg.p_max, tol=cfg.moment_tol)
    if not moments.passed:
        print(f"data carry energy above declared rank {args.rank}: moment violation {moments.max_violation:.3e} "
              f"at (p, q, side) = {moments.worst}; increase --rank", file=sys.stderr)
        return EXIT_FAIL
    base = cfg.base
    truncations = {"p_max": cfg.p_max, "n_max": cfg.n_max, "scalar_degree": cfg.scalar_degree}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TruncationWarning)
        if args.method == "xray":
            peel = recover_all_tt(sino, n, cfg.p_max)
            samples = recover_f0_spectral(peel.remainder, cfg.n_max, base.z, cfg.n_theta)
            f0 = _scalar_fit(samples, cfg)
            recovered = IttTensor(args.rank, f0, tuple(peel.components))
            report = ReconReport(recovered, peel.residuals, truncations, extra={"method": "xray"})
        else:
            D = backproject(SinogramInterpolant(sino), args.rank, base, cfg.n_theta)
            recovered, info = invert_normal(D, base, min(cfg.p_max, 8), cfg.scalar_degree, cfg.n_theta,
                                            cfg.cg_tol, cfg.cg_maxiter)
            samples = recovered.f0(base.z)
            report = ReconReport(recovered, [], truncations, extra={"method": "normal", **info})
    report.tolerances = {"moment_tol": cfg.moment_tol, "cg_tol": cfg.cg_tol, "rel_tol": cfg.rel_tol}
    report.extra["warnings"] = [str(w.message) for w in caught]
    report.extra["f0_samples"] = [[float(z.real), float(z.imag), float(v.real), float(v.imag)]
                                  for z, v in zip(base.z, samples)]
    out = Path(args.out or Path(args.sinogram).with_suffix(".report.json"))
    _write_json(out, report.to_dict())
    spec_out = out.with_name(out.name.removesuffix(".json") + ".spec.json")
    save_tensor(recovered, spec_out)
    print(f"method {args.method}, rank {args.rank}")
    for c in recovered.components:
        print(f"  degree {c.degree}: plus {np.round(c.plus[:6], 6)}  minus {np.round(c.minus[:6], 6)}")
    for w in caught:
        print(f"  warning: {w.message}")
    print(f"report -> {out}, recovered spec -> {spec_out}")
    return EXIT_OK


def cmd_rangecheck(args, cfg):
    if args.rank is None or args.rank < 0 or args.rank % 2:
        raise InputError("--rank must be a nonnegative even integer")
    sino = read_sinogram(args.sinogram)
    if sino.parity != "even":
        raise InputError("range tests need an even-parity sinogram")
    rep = range_report(sino, args.rank // 2, cfg.p_max, cfg.n_max, cfg.moment_tol, cfg.decay_threshold,
                       cfg.decay_floor)
    m = rep.moment
    print(f"declared rank {args.rank}")
    print(f"  moments      {'PASS' if m.passed else 'FAIL'}  max violation {m.max_violation:.3e} "
          f"(tol {m.tolerance:.1e} x {m.scale:.3g})")
    for r in rep.tt_decay:
        print(f"  tt decay {r.label:4s} {'PASS' if r.passed else 'FAIL'}  tail fraction {r.tail_fraction:.3e}")
    s = rep.scalar_decay
    print(f"  scalar decay {'PASS' if s.passed else 'FAIL'}  tail fraction {s.tail_fraction:.3e}")
    if args.out:
        _write_json(args.out, rep.to_dict())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_selftest(args, cfg):
    checks = select(args.filter)
    if not checks:
        raise InputError(f"no check matches filter {args.filter!r}")
    results = []
    for check in checks:
        res = check(cfg)
        results.append(res)
        print(res.summary())
        if res.error:
            print(f"     error: {res.error}")
        for item in res.items:
            print(f"     {item.line()}")
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if args.out:
        _write_json(args.out, {"config": cfg.to_dict(), "results": [r.to_dict() for r in results]})
    return EXIT_FAIL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file overriding RunConfig fields")
    common.add_argument("--out", help="output path")
    common.add_argument("--workers", type=int, default=1, help="threads for quadrature")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hypxray", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("phantom", parents=[common], help="write a catalog tensor spec")
    p.add_argument("name")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("forward", parents=[common], help="sinogram of a tensor spec")
    p.add_argument("spec")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("reconstruct", parents=[common], help="recover a tensor from a sinogram")
    p.add_argument("sinogram")
    p.add_argument("--method", choices=("xray", "normal"), default="xray")
    p.add_argument("--rank", type=int, required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("rangecheck", parents=[common], help="range tests at a declared rank")
    p.add_argument("sinogram")
    p.add_argument("--rank", type=int, required=True)
    p.set_defaults(func=cmd_rangecheck)

    p = sub.add_parser("selftest", parents=[common], help="acceptance checks")
    p.add_argument("--filter", help="check number, name or tag")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.workers < 1:
            raise InputError("--workers must be positive")
        cfg = RunConfig.load(args.config)
        return args.func(args, cfg)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NonConvergent, CGNonConvergence) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
