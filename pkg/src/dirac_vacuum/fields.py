"""Periodic-grid fields in Coulomb gauge and their spectral calculus.

The physical space R^3 is replaced by the torus [0, L)^3 sampled on ``n``
points per axis.  Conventions used throughout the package:

* ``spectral_transform`` is the unitary (``norm="ortho"``) DFT, so the
  discrete Parseval identity ``sum |f|^2 = sum |f_hat|^2`` is exact.
* The discrete L^2 norm carries the cell volume, ``||f||^2 = h^3 sum |f|^2``
  with ``h = L/n``.
* Derivatives multiply by ``i k`` where ``k`` is the *symmetric* momentum
  grid: ``2 pi j / L`` for ``|j| < n/2`` and ``0`` at the Nyquist index of an
  even grid.  Modes with ``k = 0`` under this rule ("null modes": the zero
  mode plus Nyquist corners) carry no gradient energy and are excluded from
  potentials and sources.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

GAUGE_TOL = 1e-10


class SourceProjectionWarning(UserWarning):
    """Raised when input sources had to be projected to admissible data."""


@dataclass(frozen=True)
class Grid3:
    """Cubic periodic grid with ``n`` points per axis and box length ``box_length``."""

    n: int
    box_length: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InvalidInputError(f"grid needs n >= 2 points per axis, got {self.n!r}")
        if not (np.isfinite(self.box_length) and self.box_length > 0):
            raise InvalidInputError(f"box length must be positive, got {self.box_length!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "box_length", float(self.box_length))

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    @property
    def volume(self) -> float:
        return self.box_length ** 3

    @property
    def shape(self) -> tuple:
        return (self.n, self.n, self.n)

    @property
    def size(self) -> int:
        return self.n ** 3

    @cached_property
    def axis(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Array of shape ``(3, n, n, n)`` with the sample positions."""
        return np.array(np.meshgrid(self.axis, self.axis, self.axis, indexing="ij"))

    @cached_property
    def fft_momenta_1d(self) -> np.ndarray:
        """Plain ``fftfreq`` momenta ``2 pi j / L`` (Nyquist kept at ``-pi/h``)."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)

    @cached_property
    def momenta_1d(self) -> np.ndarray:
        """Symmetric momentum axis used for spectral differentiation."""
        k = self.fft_momenta_1d.copy()
        if self.n % 2 == 0:
            k[self.n // 2] = 0.0
        return k

    @cached_property
    def momenta(self) -> np.ndarray:
        """Symmetric momentum vectors, shape ``(3, n, n, n)``."""
        k = self.momenta_1d
        return np.array(np.meshgrid(k, k, k, indexing="ij"))

    @cached_property
    def momentum_sq(self) -> np.ndarray:
        return np.sum(self.momenta ** 2, axis=0)

    @cached_property
    def momentum_norm(self) -> np.ndarray:
        return np.sqrt(self.momentum_sq)

    @cached_property
    def null_modes(self) -> np.ndarray:
        """Boolean mask of modes whose symmetric momentum vanishes."""
        return self.momentum_sq == 0.0

    def to_dict(self) -> dict:
        return {"n": self.n, "box_length": self.box_length}

    def check_same(self, other: "Grid3"):
        if self != other:
            raise InvalidInputError(f"grid mismatch: {self} vs {other}")


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


class ScalarField:
    """Real samples of a scalar function on a :class:`Grid3`."""

    ncomp = 1

    def __init__(self, grid: Grid3, values):
        values = np.asarray(values)
        if np.iscomplexobj(values):
            if np.max(np.abs(values.imag), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(values.real), initial=0.0)):
                raise InvalidInputError("field samples must be real")
            values = values.real
        expected = grid.shape if self.ncomp == 1 else (3,) + grid.shape
        if values.shape != expected:
            raise InvalidInputError(f"expected samples of shape {expected}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("field samples must be finite")
        self.grid = grid
        self.values = _frozen(values)

    @cached_property
    def fourier(self) -> np.ndarray:
        coeffs = np.fft.fftn(self.values, axes=(-3, -2, -1), norm="ortho")
        coeffs.flags.writeable = False
        return coeffs

    @classmethod
    def from_fourier(cls, grid: Grid3, coeffs):
        values = np.fft.ifftn(coeffs, axes=(-3, -2, -1), norm="ortho")
        return cls(grid, values.real)

    @classmethod
    def zeros(cls, grid: Grid3):
        shape = grid.shape if cls.ncomp == 1 else (3,) + grid.shape
        return cls(grid, np.zeros(shape))

    def l2_norm(self) -> float:
        return float(np.sqrt(self.grid.cell_volume * np.sum(self.values ** 2)))

    def inner(self, other) -> float:
        self.grid.check_same(other.grid)
        return float(self.grid.cell_volume * np.sum(self.values * other.values))

    def mean(self):
        return self.values.mean(axis=(-3, -2, -1))

    def _like(self, values):
        return type(self)(self.grid, values)

    def __add__(self, other):
        self.grid.check_same(other.grid)
        return self._like(self.values + other.values)

    def __sub__(self, other):
        self.grid.check_same(other.grid)
        return self._like(self.values - other.values)

    def __mul__(self, scalar):
        return self._like(self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)

    def __repr__(self):
        return f"{type(self).__name__}(n={self.grid.n}, L={self.grid.box_length}, norm={self.l2_norm():.4g})"


class VectorField(ScalarField):
    """Three real components on a :class:`Grid3`; ``values[c]`` is component ``c``."""

    ncomp = 3

    def component(self, c: int) -> ScalarField:
        return ScalarField(self.grid, self.values[c])


def spectral_transform(f: ScalarField) -> np.ndarray:
    """Unitary DFT coefficients of a scalar or vector field."""
    return f.fourier


def inverse_transform(grid: Grid3, coeffs) -> ScalarField:
    """Inverse of :func:`spectral_transform`; returns a Scalar- or VectorField by shape."""
    coeffs = np.asarray(coeffs)
    cls = VectorField if coeffs.ndim == 4 else ScalarField
    return cls.from_fourier(grid, coeffs)


def _common_grid(*fields) -> Grid3:
    grid = fields[0].grid
    for f in fields[1:]:
        grid.check_same(f.grid)
    return grid


def gradient_field(v: ScalarField) -> VectorField:
    """Spectral gradient ``grad v``."""
    grid = v.grid
    return VectorField.from_fourier(grid, 1j * grid.momenta * v.fourier)


def curl_field(a: VectorField) -> VectorField:
    grid = a.grid
    ik = 1j * grid.momenta
    ah = a.fourier
    ch = np.array([
        ik[1] * ah[2] - ik[2] * ah[1],
        ik[2] * ah[0] - ik[0] * ah[2],
        ik[0] * ah[1] - ik[1] * ah[0],
    ])
    return VectorField.from_fourier(grid, ch)


def divergence(a: VectorField) -> ScalarField:
    grid = a.grid
    return ScalarField.from_fourier(grid, np.sum(1j * grid.momenta * a.fourier, axis=0))


def laplacian(f: ScalarField) -> ScalarField:
    """Spectral Laplacian, equal to ``div(grad f)`` for the symmetric momenta."""
    grid = f.grid
    return type(f).from_fourier(grid, -grid.momentum_sq * f.fourier)


def transverse_coefficients(grid: Grid3, ah) -> np.ndarray:
    """Fourier-space transverse projection; modes with ``k = 0`` pass through."""
    k = grid.momenta
    k2 = grid.momentum_sq
    safe = np.where(k2 > 0, k2, 1.0)
    kdota = np.sum(k * ah, axis=0)
    return ah - k * np.where(k2 > 0, kdota / safe, 0.0)


def leray_project(a: VectorField) -> VectorField:
    """Project onto divergence-free fields (orthogonal in the discrete L^2 sense)."""
    return VectorField.from_fourier(a.grid, transverse_coefficients(a.grid, a.fourier))


def _strip_null(grid: Grid3, coeffs) -> np.ndarray:
    return np.where(grid.null_modes, 0.0, coeffs)


def _relative_change(before, after) -> float:
    scale = np.linalg.norm(before)
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(before - after) / scale)


def admissible_density(rho: ScalarField, tol: float = GAUGE_TOL, name: str = "rho") -> tuple:
    """Remove the null-mode content of a density.

    Returns the projected field and the relative change; warns when that
    change exceeds ``tol``.
    """
    coeffs = _strip_null(rho.grid, rho.fourier)
    change = _relative_change(rho.fourier, coeffs)
    if change > tol:
        warnings.warn(f"{name}: removed null-mode (mean) content, relative change {change:.3e}",
                      SourceProjectionWarning, stacklevel=3)
    return ScalarField.from_fourier(rho.grid, coeffs), change


def admissible_current(j: VectorField, tol: float = GAUGE_TOL, name: str = "j") -> tuple:
    """Keep the transverse, non-null part of a current."""
    coeffs = _strip_null(j.grid, transverse_coefficients(j.grid, j.fourier))
    change = _relative_change(j.fourier, coeffs)
    if change > tol:
        warnings.warn(f"{name}: removed longitudinal/null-mode content, relative change {change:.3e}",
                      SourceProjectionWarning, stacklevel=3)
    return VectorField.from_fourier(j.grid, coeffs), change


class FourPotential:
    """Electrostatic potential ``v`` and magnetic potential ``a``.

    By default the pair is validated to be in Coulomb gauge with no null-mode
    content.  ``coulomb=False`` switches the check off; it is only meant for
    gauge-transformed copies used in invariance checks.
    """

    def __init__(self, v: ScalarField, a: VectorField, coulomb: bool = True):
        grid = _common_grid(v, a)
        self.grid = grid
        self.v = v
        self.a = a
        self.coulomb = coulomb
        if coulomb:
            scale = max(1.0, float(np.max(np.abs(a.fourier), initial=0.0)))
            div = np.abs(np.sum(grid.momenta * a.fourier, axis=0))
            if np.max(div, initial=0.0) > GAUGE_TOL * scale * max(1.0, grid.momenta_1d.max()):
                raise InvalidInputError(f"magnetic potential is not divergence-free (max |k.a| = {div.max():.3e})")
            null = grid.null_modes
            vscale = max(1.0, float(np.max(np.abs(v.fourier), initial=0.0)))
            if np.max(np.abs(v.fourier[null]), initial=0.0) > GAUGE_TOL * vscale:
                raise InvalidInputError("electrostatic potential has null-mode (mean) content")
            if np.max(np.abs(a.fourier[:, null]), initial=0.0) > GAUGE_TOL * scale:
                raise InvalidInputError("magnetic potential has null-mode (constant) content")

    @classmethod
    def zeros(cls, grid: Grid3) -> "FourPotential":
        return cls(ScalarField.zeros(grid), VectorField.zeros(grid))

    @classmethod
    def from_arrays(cls, grid: Grid3, v=None, a=None) -> "FourPotential":
        """Project raw samples onto the admissible Coulomb-gauge space."""
        v = np.zeros(grid.shape) if v is None else v
        a = np.zeros((3,) + grid.shape) if a is None else a
        vf = ScalarField(grid, v)
        af = VectorField(grid, a)
        vf = ScalarField.from_fourier(grid, _strip_null(grid, vf.fourier))
        af = VectorField.from_fourier(grid, _strip_null(grid, transverse_coefficients(grid, af.fourier)))
        return cls(vf, af)

    @classmethod
    def from_fourier(cls, grid: Grid3, v_hat=None, a_hat=None) -> "FourPotential":
        v = np.zeros(grid.shape, complex) if v_hat is None else v_hat
        a = np.zeros((3,) + grid.shape, complex) if a_hat is None else a_hat
        return cls(ScalarField.from_fourier(grid, v), VectorField.from_fourier(grid, a))

    def gauge_shift(self, chi: ScalarField, coupling: float = 1.0) -> "FourPotential":
        """Return ``(V, A + grad chi)``.  The result is no longer in Coulomb gauge."""
        return FourPotential(self.v, self.a + gradient_field(chi), coulomb=False)

    def fields(self) -> "FieldStrength":
        return FieldStrength(-gradient_field(self.v), curl_field(self.a))

    def _combine(self, other, sv, so):
        return FourPotential(self.v * sv + other.v * so, self.a * sv + other.a * so,
                             coulomb=self.coulomb and other.coulomb)

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, s):
        return FourPotential(self.v * s, self.a * s, coulomb=self.coulomb)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def sobolev_norm(self) -> float:
        return field_norms(self)[0]

    def __repr__(self):
        return f"FourPotential(n={self.grid.n}, |v|={self.v.l2_norm():.4g}, |a|={self.a.l2_norm():.4g})"


@dataclass(frozen=True)
class FieldStrength:
    """Electric field ``e = -grad V`` and magnetic field ``b = curl A``."""

    e: VectorField
    b: VectorField

    @property
    def grid(self) -> Grid3:
        return self.e.grid

    def l2_norm(self) -> float:
        return float(np.hypot(self.e.l2_norm(), self.b.l2_norm()))


@dataclass
class SourceDensities:
    """External charge density and current after projection to admissible data."""

    rho_ext: ScalarField
    j_ext: VectorField
    adjustments: dict = field(default_factory=dict)

    @classmethod
    def admissible(cls, rho: ScalarField | None = None, j: VectorField | None = None,
                   grid: Grid3 | None = None) -> "SourceDensities":
        grid = grid or (rho.grid if rho is not None else j.grid)
        rho = ScalarField.zeros(grid) if rho is None else rho
        j = VectorField.zeros(grid) if j is None else j
        grid.check_same(rho.grid)
        grid.check_same(j.grid)
        rho_p, drho = admissible_density(rho, name="rho_ext")
        j_p, dj = admissible_current(j, name="j_ext")
        return cls(rho_p, j_p, {"rho_ext": drho, "j_ext": dj})

    @classmethod
    def zeros(cls, grid: Grid3) -> "SourceDensities":
        return cls(ScalarField.zeros(grid), VectorField.zeros(grid), {"rho_ext": 0.0, "j_ext": 0.0})

    @property
    def grid(self) -> Grid3:
        return self.rho_ext.grid

    def is_zero(self) -> bool:
        return not (np.any(self.rho_ext.values) or np.any(self.j_ext.values))


def coulomb_solve(rho: ScalarField) -> ScalarField:
    """Solve ``-Laplace V = 4 pi rho`` with ``V_hat = 0`` on the null modes."""
    grid = rho.grid
    rho_p, _ = admissible_density(rho, name="coulomb_solve source")
    k2 = grid.momentum_sq
    safe = np.where(k2 > 0, k2, 1.0)
    vh = np.where(k2 > 0, 4 * np.pi * rho_p.fourier / safe, 0.0)
    return ScalarField.from_fourier(grid, vh)


def vector_poisson_solve(j: VectorField) -> VectorField:
    """Solve ``-Laplace A = 4 pi P_T j`` for a divergence-free ``A``."""
    grid = j.grid
    j_p, _ = admissible_current(j, name="vector_poisson_solve source")
    k2 = grid.momentum_sq
    safe = np.where(k2 > 0, k2, 1.0)
    ah = np.where(k2 > 0, 4 * np.pi * j_p.fourier / safe, 0.0)
    return VectorField.from_fourier(grid, ah)


def field_norms(pot: FourPotential) -> tuple:
    """Return ``(sobolev_norm, maxwell_action)`` of a four-potential.

    ``sobolev_norm^2 = ||grad V||^2 + ||curl A||^2`` and
    ``maxwell_action = (||grad V||^2 - ||curl A||^2) / (8 pi)``.
    """
    ev = gradient_field(pot.v).l2_norm() ** 2
    bv = curl_field(pot.a).l2_norm() ** 2
    return float(np.sqrt(ev + bv)), float((ev - bv) / (8 * np.pi))


def electric_norm(pot: FourPotential) -> float:
    return gradient_field(pot.v).l2_norm()


def magnetic_norm(pot: FourPotential) -> float:
    return curl_field(pot.a).l2_norm()


# ---------------------------------------------------------------------------
# File I/O: raw little-endian float64 samples plus a JSON sidecar.

def save_field(path, f: ScalarField, extra: dict | None = None) -> Path:
    """Write ``<path>.bin`` (C-order float64, little endian) and ``<path>.json``."""
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".bin", ".json") else path
    base.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(f.values, dtype="<f8")
    base.with_suffix(".bin").write_bytes(data.tobytes())
    meta = {
        "kind": "vector" if isinstance(f, VectorField) else "scalar",
        "shape": list(data.shape),
        "dtype": "<f8",
        "order": "C",
        "grid": f.grid.to_dict(),
    }
    if extra:
        meta.update(extra)
    base.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return base.with_suffix(".bin")


def load_field(path) -> ScalarField:
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".bin", ".json") else path
    meta = json.loads(base.with_suffix(".json").read_text())
    grid = Grid3(meta["grid"]["n"], meta["grid"]["box_length"])
    raw = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype=meta.get("dtype", "<f8"))
    values = raw.reshape(meta["shape"]).astype(float)
    cls = VectorField if meta["kind"] == "vector" else ScalarField
    return cls(grid, values)


def save_potential(path, pot: FourPotential, extra: dict | None = None):
    base = Path(path)
    save_field(base.parent / (base.name + "_v"), pot.v, extra)
    save_field(base.parent / (base.name + "_a"), pot.a, extra)


def load_potential(path) -> FourPotential:
    base = Path(path)
    v = load_field(base.parent / (base.name + "_v"))
    a = load_field(base.parent / (base.name + "_a"))
    return FourPotential(v, a)


def export_slice_csv(path, f: ScalarField, axis: int = 0, index=None) -> Path:
    """Write a 1-D line through the grid along ``axis`` (other indices fixed) as CSV."""
    grid = f.grid
    idx = [0, 0, 0] if index is None else list(index)
    idx[axis] = slice(None)
    vals = f.values[(slice(None),) + tuple(idx)] if isinstance(f, VectorField) else f.values[tuple(idx)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        if isinstance(f, VectorField):
            fh.write("x,f0,f1,f2\n")
            for i, x in enumerate(grid.axis.tolist()):
                row = vals[:, i].tolist()
                fh.write(f"{x!r},{row[0]!r},{row[1]!r},{row[2]!r}\n")
        else:
            fh.write("x,f\n")
            for x, y in zip(grid.axis.tolist(), vals.tolist()):
                fh.write(f"{x!r},{y!r}\n")
    return path


def gaussian_density(grid: Grid3, charge: float, width: float, center=None) -> ScalarField:
    """Periodized Gaussian charge blob (before null-mode removal)."""
    center = np.full(3, grid.box_length / 2) if center is None else np.asarray(center, float)
    d = grid.coordinates - center[:, None, None, None]
    d -= grid.box_length * np.round(d / grid.box_length)
    r2 = np.sum(d ** 2, axis=0)
    g = np.exp(-r2 / (2 * width ** 2)) / (2 * np.pi * width ** 2) ** 1.5
    return ScalarField(grid, charge * g)
