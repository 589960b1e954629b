"""File formats, run configuration and the phantom catalog."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import jsonschema
import numpy as np

from .dataspace import GeodesicGrid, Sinogram
from .fiber import IttTensor, ScalarField, TTComponent
from .forward import QuadratureSpec
from .reconstruct import BaseGrid, KleinBasis

SINOGRAM_COLUMNS = ("beta", "a", "weight", "re", "im")


class InputError(ValueError):
    """Malformed or inconsistent input file."""


class UnknownPhantom(InputError):
    """Name not in the phantom catalog."""


# ---------------------------------------------------------------------------
# tensor spec files

_COMPLEX_LIST = {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                            "minItems": 2, "maxItems": 2}}

TENSOR_SCHEMA = {
    "type": "object",
    "required": ["rank", "f0", "components"],
    "properties": {
        "rank": {"type": "integer", "minimum": 0, "multipleOf": 2},
        "f0": {
            "type": "object",
            "required": ["profile"],
            "properties": {
                "profile": {"enum": ["zero", "gaussian_bump", "compact_bump", "power_x", "klein_expansion"]},
                "center": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "width": {"type": "number", "exclusiveMinimum": 0},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "amplitude": {"type": "number"},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "degree": {"type": "integer", "minimum": 0},
                "coeffs": _COMPLEX_LIST,
            },
        },
        "components": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["k", "plus", "minus"],
                "properties": {"k": {"type": "integer", "minimum": 1}, "plus": _COMPLEX_LIST, "minus": _COMPLEX_LIST},
            },
        },
    },
}


def _complex_list(pairs):
    return np.array([complex(re, im) for re, im in pairs], dtype=complex)


def _pairs(values):
    return [[float(v.real), float(v.imag)] for v in np.asarray(values, complex)]


def scalar_from_spec(spec: dict) -> ScalarField:
    kind = spec["profile"]
    try:
        if kind == "zero":
            return ScalarField.zero()
        if kind == "gaussian_bump":
            return ScalarField.gaussian_bump(complex(*spec.get("center", (0.0, 0.0))), spec.get("width", 0.5),
                                             spec.get("amplitude", 1.0))
        if kind == "compact_bump":
            return ScalarField.compact_bump(complex(*spec.get("center", (0.0, 0.0))), spec.get("radius", 0.5),
                                            spec.get("amplitude", 1.0))
        if kind == "power_x":
            return ScalarField.power_x(spec["alpha"], spec.get("amplitude", 1.0))
        if kind == "klein_expansion":
            basis = KleinBasis(spec["degree"])
            coeffs = _complex_list(spec["coeffs"])
            if coeffs.size != len(basis):
                raise InputError(f"klein_expansion of degree {spec['degree']} needs {len(basis)} coefficients")
            return basis.field(coeffs)
    except (KeyError, ValueError) as exc:
        raise InputError(f"bad scalar profile {spec}: {exc}") from exc
    raise InputError(f"unknown scalar profile {kind!r}")


def tensor_from_spec(spec: dict) -> IttTensor:
    """Validate a tensor spec dictionary and build the tensor."""
    try:
        jsonschema.validate(spec, TENSOR_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise InputError(f"tensor spec rejected: {exc.message}") from exc
    comps = []
    for c in spec["components"]:
        if 2 * c["k"] > spec["rank"]:
            raise InputError(f"component k={c['k']} exceeds rank {spec['rank']}")
        plus, minus = _complex_list(c["plus"]), _complex_list(c["minus"])
        if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
            raise InputError("tt coefficients must be finite")
        comps.append(TTComponent(2 * c["k"], plus if plus.size else np.zeros(1), minus if minus.size else np.zeros(1)))
    try:
        return IttTensor(spec["rank"], scalar_from_spec(spec["f0"]), tuple(comps))
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def tensor_to_spec(f: IttTensor) -> dict:
    profile = dict(f.f0.profile) if f.f0.profile else {"profile": "zero"}
    if profile.get("profile") not in TENSOR_SCHEMA["properties"]["f0"]["properties"]["profile"]["enum"]:
        raise InputError(f"scalar profile {profile.get('profile')!r} cannot be serialized")
    return {"rank": f.rank, "f0": profile,
            "components": [{"k": c.k, "plus": _pairs(c.plus), "minus": _pairs(c.minus)} for c in f.components]}


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def load_tensor(path) -> IttTensor:
    return tensor_from_spec(read_json(path))


def save_tensor(f: IttTensor, path):
    Path(path).write_text(json.dumps(tensor_to_spec(f), indent=2) + "\n")


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# sinogram files


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_sinogram(sino: Sinogram, path, meta=None):
    """Write ``beta,a,weight,re,im`` rows (beta-major) plus a JSON sidecar."""
    B, A = sino.grid.mesh
    W = sino.grid.weights
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SINOGRAM_COLUMNS)
        for row in zip(B.ravel(), A.ravel(), W.ravel(), sino.values.real.ravel(), sino.values.imag.ravel()):
            writer.writerow([repr(float(v)) for v in row])
    side = {"grid": sino.grid.metadata(), "parity": sino.parity, **(meta or {})}
    sidecar_path(path).write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")


def read_sinogram(path) -> Sinogram:
    """Read a sinogram CSV; the grid comes from the sidecar and is checked against the rows."""
    side = read_json(sidecar_path(path))
    try:
        grid = GeodesicGrid(int(side["grid"]["n_beta"]), int(side["grid"]["n_a"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"sidecar of {path} lacks a valid grid: {exc}") from exc
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(v) for v in r] for r in reader if r])
    except (OSError, StopIteration, ValueError) as exc:
        raise InputError(f"cannot parse sinogram {path}: {exc}") from exc
    if tuple(header) != SINOGRAM_COLUMNS:
        raise InputError(f"sinogram header must be {','.join(SINOGRAM_COLUMNS)}")
    if rows.shape != (grid.n_beta * grid.n_a, 5):
        raise InputError(f"expected {grid.n_beta * grid.n_a} rows, found {rows.shape[0]}")
    B, A = grid.mesh
    if not (np.allclose(rows[:, 0], B.ravel(), atol=1e-12) and np.allclose(rows[:, 1], A.ravel(), rtol=1e-12)):
        raise InputError("sinogram nodes do not match the grid declared in the sidecar")
    values = (rows[:, 3] + 1j * rows[:, 4]).reshape(B.shape)
    return Sinogram(grid, values, side.get("parity", "even"))


# ---------------------------------------------------------------------------
# run configuration


@dataclass(frozen=True)
class RunConfig:
    """Grid sizes, tolerances and truncations for one run."""

    n_beta: int = 64
    n_a: int = 96
    n_theta: int = 256
    n_r: int = 16
    n_phi: int = 32
    r_max: float = 0.8
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    t_max: float = 40.0
    n_max: int = 24
    p_max: int = 12
    scalar_degree: int = 16
    moment_tol: float = 1e-5
    decay_threshold: float = 0.05
    decay_floor: float = 1e-10
    cg_tol: float = 1e-8
    cg_maxiter: int = 200
    out_dir: str = "."

    def __post_init__(self):
        for name in ("n_beta", "n_a", "n_theta", "n_r", "n_phi", "n_max", "p_max", "scalar_degree", "cg_maxiter"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) <= 0:
                raise InputError(f"{name} must be a positive integer")
        for name in ("rel_tol", "abs_tol", "moment_tol", "decay_threshold", "decay_floor", "cg_tol", "r_max"):
            if not 0 < getattr(self, name) < 1:
                raise InputError(f"{name} must lie in (0, 1)")
        if self.t_max <= 0:
            raise InputError("t_max must be positive")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path=None):
        return cls() if path is None else cls.from_dict(read_json(path))

    def to_dict(self):
        return asdict(self)

    @property
    def grid(self):
        return GeodesicGrid(self.n_beta, self.n_a)

    @property
    def base(self):
        return BaseGrid(self.n_r, self.n_phi, self.r_max)

    @property
    def quad(self):
        return QuadratureSpec(self.rel_tol, self.abs_tol, self.t_max)


# ---------------------------------------------------------------------------
# phantom catalog


def _tt_monomial(k=1, p=0):
    plus = np.zeros(int(p) + 1, complex)
    plus[-1] = 1.0
    return IttTensor(2 * int(k), ScalarField.zero(), (TTComponent(2 * int(k), plus, np.zeros(1)),))


def _mixed_rank4(width=0.5):
    return IttTensor(4, ScalarField.gaussian_bump(0.0, width),
                     (TTComponent.real(2, [1.0, -1.0]), TTComponent.real(4, [0.0, 1.0])))


def _rank2_mixed(width=0.5):
    return IttTensor(2, ScalarField.gaussian_bump(0.1, width), (TTComponent.real(2, [1.0, 0.5]),))


def _power_x(alpha=1.0, rank=0):
    return IttTensor(int(rank), ScalarField.power_x(float(alpha)))


def _scalar_bump(kind="gaussian", center=(0.0, 0.0), width=0.5, amplitude=1.0, rank=0):
    c = complex(*center)
    if kind == "gaussian":
        f0 = ScalarField.gaussian_bump(c, width, amplitude)
    elif kind == "compact":
        f0 = ScalarField.compact_bump(c, width, amplitude)
    else:
        raise InputError("scalar-bump kind must be 'gaussian' or 'compact'")
    return IttTensor(int(rank), f0)


def _zero(rank=0):
    return IttTensor(int(rank))


PHANTOMS = {
    "tt-monomial": _tt_monomial,
    "mixed-rank4": _mixed_rank4,
    "rank2-mixed": _rank2_mixed,
    "power-x": _power_x,
    "scalar-bump": _scalar_bump,
    "zero": _zero,
}


def make_phantom(name, **params) -> IttTensor:
    try:
        builder = PHANTOMS[name]
    except KeyError:
        raise UnknownPhantom(f"unknown phantom {name!r}; choose from {sorted(PHANTOMS)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise InputError(f"bad parameters for {name}: {exc}") from exc
