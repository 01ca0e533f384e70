"""Vacuum dielectric response ``M(k)``, its Uehling limit, and the quadratic energy.

With ``t = u(1-u)k^2`` and the PV sum ``Phi`` from :mod:`dirac_vacuum.pv`,

    M(k) = -(2/pi) * int_0^1 u(1-u) Phi(u(1-u) k^2) du.

Since ``Phi(t) = -2 log(Lambda) + sum_j c_j log1p(t/m_j^2)``, the integral is
also written as the constant ``M(0) = 2 log(Lambda)/(3 pi)`` minus a screened part

    S(k) = (2/pi) * int_0^1 u(1-u) sum_j c_j log1p(u(1-u) k^2 / m_j^2) du.

In both forms the three logarithms are combined inside the integrand, so the
PV cancellation happens before the quadrature.  :func:`m_kernel` integrates
``Phi`` directly, which keeps ``M`` accurate relative to its own size at
large ``k``.  :func:`kernel_gap` integrates ``S`` and so never subtracts
two numbers of order ``M(0)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .fields import FieldStrength
from .pv import PVScheme, phi
from .quadrature import adaptive_gauss_legendre

M_TOL = 1e-10
U_TOL = 1e-12


def _as_momenta(k) -> np.ndarray:
    arr = np.asarray(k, dtype=float).ravel()
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise InvalidInputError("momentum magnitudes must be finite and >= 0")
    return arr


def _shape_like(k, values):
    return float(values[0]) if np.ndim(k) == 0 else values.reshape(np.shape(k))


def m_zero(scheme: PVScheme) -> float:
    """``M(0) = 2 log(Lambda) / (3 pi)``."""
    return 2.0 * scheme.log_lambda / (3.0 * np.pi)


def screened_part(scheme: PVScheme, k, tol: float = M_TOL, return_error: bool = False):
    """``S(k) = M(0) - M(k)``, non-negative and increasing in ``k``."""
    kk = _as_momenta(k)
    c = scheme.coefficients
    inv_msq = 1.0 / scheme.mass_array ** 2
    ksq = kk ** 2

    def integrand(u):
        w = u * (1.0 - u)
        t = w[:, None, None] * ksq[None, :, None] * inv_msq[None, None, :]
        return (2.0 / np.pi) * w[:, None] * (np.log1p(t) @ c)

    val, err = adaptive_gauss_legendre(integrand, 0.0, 1.0, tol=tol, breakpoints=(0.5,))
    out = _shape_like(k, np.asarray(val))
    return (out, err) if return_error else out


def m_kernel(scheme: PVScheme, k, tol: float = M_TOL, return_error: bool = False):
    """Dielectric response ``M(k)`` (scalar or array of momenta).

    Parameters
    ----------
    scheme : PVScheme
    k : float or array_like
        Momentum magnitudes in the same inverse-length unit as the masses.
    tol : float
        Absolute quadrature tolerance.
    return_error : bool
        Also return the quadrature error estimate.

    Examples
    --------
    >>> from dirac_vacuum.pv import derive_scheme
    >>> round(m_kernel(derive_scheme((1, 2, 3)), 0.0), 6)
    0.095465
    """
    kk = _as_momenta(k)
    ksq = kk ** 2

    def integrand(u):
        w = u * (1.0 - u)
        return -(2.0 / np.pi) * w[:, None] * phi(scheme, w[:, None] * ksq[None, :])

    val, err = adaptive_gauss_legendre(integrand, 0.0, 1.0, tol=tol, breakpoints=(0.5,))
    out = _shape_like(k, np.asarray(val))
    return (out, err) if return_error else out


def uehling_kernel(k, m: float = 1.0, tol: float = U_TOL, return_error: bool = False):
    """Uehling limit shape ``U`` evaluated at the ratio ``q = k/m``.

    ``U(q) = (q^2 / 4 pi) int_0^1 (z^2 - z^4/3) / (1 + q^2 (1 - z^2)/4) dz``,
    which behaves as ``q^2 / (15 pi)`` for small ``q``.
    """
    if not (np.isfinite(m) and m > 0):
        raise InvalidInputError(f"reference mass must be positive, got {m!r}")
    q = _as_momenta(k) / m
    qsq = q ** 2

    def integrand(z):
        num = z ** 2 - z ** 4 / 3.0
        return num[:, None] / (1.0 + qsq[None, :] * (1.0 - z[:, None] ** 2) / 4.0)

    # the prefactor q^2/(4 pi) can reach ~1e1 on the scanned range; scale tol accordingly
    scale = max(1.0, float(qsq.max()) / (4 * np.pi))
    val, err = adaptive_gauss_legendre(integrand, 0.0, 1.0, tol=tol / scale)
    out = qsq / (4 * np.pi) * np.asarray(val)
    out = _shape_like(k, out)
    return (out, err * scale) if return_error else out


def kernel_gap(scheme: PVScheme, k, tol: float = 1e-12):
    """``(M(0) - M(k)) - U(k/m0)``; vanishes as the regulator masses grow."""
    s = screened_part(scheme, k, tol=tol)
    return s - uehling_kernel(k, scheme.masses.m0, tol=tol)


def kernel_on_grid(scheme: PVScheme, kmag: np.ndarray, tol: float = M_TOL) -> np.ndarray:
    """Evaluate ``M`` on an array of momentum magnitudes, reusing repeated values."""
    kmag = np.asarray(kmag, dtype=float)
    uniq, inv = np.unique(np.round(kmag, 12), return_inverse=True)
    return np.asarray(m_kernel(scheme, uniq, tol=tol)).reshape(-1)[inv].reshape(kmag.shape)


def f2_energy(fs: FieldStrength, scheme: PVScheme, tol: float = M_TOL) -> float:
    """Second-order vacuum energy of a periodic field configuration.

    ``F_2 = (h^3 / 8 pi) sum_k M(|k|) (|B_k|^2 - |E_k|^2)`` where ``B_k, E_k``
    are the unitary DFT coefficients and ``h^3`` the cell volume.  With this
    normalization ``h^3 sum_k |f_k|^2`` is exactly the discrete L^2 norm, so a
    constant kernel ``M`` would give ``M (||B||^2 - ||E||^2) / (8 pi)``.

    Momentum magnitudes are those of the symmetric grid used for the spectral
    derivatives, in the inverse-length unit of the masses.
    """
    if not isinstance(fs, FieldStrength):
        raise InvalidInputError("f2_energy expects a FieldStrength")
    fs.e.grid.check_same(fs.b.grid)
    grid = fs.grid
    weight = np.sum(np.abs(fs.b.fourier) ** 2, axis=0) - np.sum(np.abs(fs.e.fourier) ** 2, axis=0)
    mask = weight != 0
    if not np.any(mask):
        return 0.0
    mk = kernel_on_grid(scheme, grid.momentum_norm[mask], tol=tol)
    return float(grid.cell_volume / (8 * np.pi) * np.sum(mk * weight[mask]))


@dataclass
class KernelTable:
    """Tabulated ``M(k)`` with optional Uehling and gap columns."""

    k_values: np.ndarray
    m_values: np.ndarray
    scheme: PVScheme
    u_values: np.ndarray | None = None
    gap_values: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.k_values = np.asarray(self.k_values, dtype=float)
        self.m_values = np.asarray(self.m_values, dtype=float)
        if self.k_values.shape != self.m_values.shape:
            raise InvalidInputError("k and M columns differ in length")
        if np.any(self.k_values < 0) or np.any(np.diff(self.k_values) <= 0):
            raise InvalidInputError("k values must be non-negative and strictly increasing")

    @classmethod
    def build(cls, scheme: PVScheme, k_values, with_uehling: bool = True, tol: float = M_TOL):
        k = _as_momenta(k_values)
        m = np.asarray(m_kernel(scheme, k, tol=tol)).reshape(-1)
        u = gap = None
        if with_uehling:
            u = np.asarray(uehling_kernel(k, scheme.masses.m0)).reshape(-1)
            gap = np.asarray(kernel_gap(scheme, k)).reshape(-1)
        meta = {"scheme": scheme.to_dict(), "m_tol": tol, "u_tol": U_TOL}
        return cls(k, m, scheme, u, gap, meta)

    def check_invariants(self) -> list:
        """Return a list of violated table invariants (empty when all hold)."""
        problems = []
        if np.any(self.m_values <= 0):
            problems.append("M must be positive")
        if np.any(np.diff(self.m_values) > 1e-14):
            problems.append("M must be non-increasing in k")
        if self.k_values[0] == 0 and np.any(self.m_values > self.m_values[0] + 1e-14):
            problems.append("M must be bounded by M(0)")
        return problems

    def to_csv(self, path, metadata: dict | None = None) -> Path:
        """Write ``k,M,U,gap`` rows plus a ``.json`` metadata sidecar."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        u = self.u_values if self.u_values is not None else np.full_like(self.k_values, np.nan)
        g = self.gap_values if self.gap_values is not None else np.full_like(self.k_values, np.nan)
        lines = ["k,M,U,gap"]
        lines += [f"{k!r},{m!r},{uu!r},{gg!r}" for k, m, uu, gg in
                  zip(self.k_values.tolist(), self.m_values.tolist(), u.tolist(), g.tolist())]
        path.write_text("\n".join(lines) + "\n")
        meta = dict(self.metadata)
        if metadata:
            meta.update(metadata)
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path
