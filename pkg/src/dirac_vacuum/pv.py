"""Pauli-Villars coefficient schemes with two auxiliary masses.

Units: c = hbar = 1, so masses are inverse lengths.  Every quantity in the
package inherits whatever unit the masses are given in.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

PV_TOL = 1e-12


@dataclass(frozen=True)
class MassSpectrum:
    """Physical mass ``m0`` and the two regulator masses ``m1 < m2``."""

    m0: float
    m1: float
    m2: float

    def __post_init__(self):
        for name in ("m0", "m1", "m2"):
            val = getattr(self, name)
            if not np.isfinite(val):
                raise InvalidInputError(f"{name} must be finite, got {val!r}")
        if not self.m0 > 0:
            raise InvalidInputError(f"m0 must be positive, got {self.m0!r}")
        if not self.m1 > self.m0:
            raise InvalidInputError(f"m1 must exceed m0 (m0={self.m0!r}, m1={self.m1!r})")
        if not self.m2 > self.m1:
            raise InvalidInputError(f"m2 must exceed m1 (m1={self.m1!r}, m2={self.m2!r})")

    def as_array(self) -> np.ndarray:
        return np.array([self.m0, self.m1, self.m2], dtype=float)

    def scaled(self, s: float) -> "MassSpectrum":
        return MassSpectrum(s * self.m0, s * self.m1, s * self.m2)


@dataclass(frozen=True)
class PVScheme:
    masses: MassSpectrum
    c0: float
    c1: float
    c2: float
    log_lambda: float

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2])

    @property
    def mass_array(self) -> np.ndarray:
        return self.masses.as_array()

    @property
    def cutoff(self) -> float:
        return float(np.exp(self.log_lambda))

    def terms(self):
        """Iterate over ``(c_j, m_j)`` pairs."""
        return zip(self.coefficients.tolist(), self.mass_array.tolist())

    def to_dict(self) -> dict:
        m = self.masses
        return {"m0": m.m0, "m1": m.m1, "m2": m.m2,
                "c0": self.c0, "c1": self.c1, "c2": self.c2,
                "log_lambda": self.log_lambda}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "PVScheme":
        """Rebuild from serialized keys; coefficients are re-derived and checked."""
        scheme = derive_scheme(MassSpectrum(float(data["m0"]), float(data["m1"]), float(data["m2"])))
        for key in ("c0", "c1", "c2", "log_lambda"):
            if key in data and not np.isclose(float(data[key]), getattr(scheme, key), rtol=1e-12, atol=1e-12):
                raise InvalidInputError(f"serialized {key}={data[key]!r} inconsistent with the masses")
        return scheme

    @classmethod
    def from_json(cls, text: str) -> "PVScheme":
        return cls.from_dict(json.loads(text))


def derive_scheme(masses: MassSpectrum | tuple) -> PVScheme:
    """Solve the two PV conditions for ``c1, c2`` given ``c0 = 1``.

    Examples
    --------
    >>> s = derive_scheme(MassSpectrum(1.0, 2.0, 3.0))
    >>> round(s.c1, 12), round(s.c2, 12)
    (-1.6, 0.6)
    """
    if not isinstance(masses, MassSpectrum):
        masses = MassSpectrum(*map(float, masses))
    m0, m1, m2 = masses.as_array()
    m0s, m1s, m2s = m0 ** 2, m1 ** 2, m2 ** 2
    # differences of squares in factored form avoid cancellation for close masses
    split = (m2 - m1) * (m2 + m1)
    c0 = 1.0
    c1 = -(m2 - m0) * (m2 + m0) / split
    c2 = (m1 - m0) * (m1 + m0) / split
    s0 = c0 + c1 + c2
    s2 = c0 * m0s + c1 * m1s + c2 * m2s
    # rounding c1, c2 alone leaves identity errors of order eps * |c|, so the guard scales with |c|
    cond = max(1.0, abs(c1) + abs(c2))
    if abs(s0) > PV_TOL * cond or abs(s2) > PV_TOL * cond * m2s:
        raise InvalidInputError(
            f"PV conditions not met to {PV_TOL:g}: sum c = {s0:.3e}, sum c m^2 = {s2:.3e}")
    log_lambda_sq = -(c0 * np.log(m0s) + c1 * np.log(m1s) + c2 * np.log(m2s))
    return PVScheme(masses, c0, float(c1), float(c2), float(0.5 * log_lambda_sq))


def averaged_cutoff(scheme: PVScheme) -> float:
    """Averaged ultraviolet cutoff ``Lambda`` with ``log Lambda^2 = -sum c_j log m_j^2``."""
    return scheme.cutoff


def phi(scheme: PVScheme, t):
    """``Phi(t) = sum_j c_j log(m_j^2 + t)`` for ``t >= 0`` (scalar or array).

    Evaluated as ``sum_j c_j log(1 + m_j^2/t)`` for ``t`` above the largest
    squared mass, which is the same value (``sum c_j = 0``) without the
    cancellation between three large logarithms.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(~np.isfinite(t_arr)):
        raise InvalidInputError("phi requires finite t >= 0")
    c = scheme.coefficients
    msq = scheme.mass_array ** 2
    tb = t_arr[..., None]
    big = tb > msq[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        small_form = np.log(msq + tb)
        large_form = np.log1p(msq / np.where(big, tb, 1.0))
    out = np.where(big, large_form, small_form) @ c
    return float(out) if np.ndim(t) == 0 else out


def phi_derivative(scheme: PVScheme, t):
    """Closed form of ``Phi'(t)``; positive for every ``t >= 0``."""
    t = np.asarray(t, dtype=float)
    m0s, m1s, m2s = scheme.mass_array ** 2
    return (m1s - m0s) * (m2s - m0s) / ((m0s + t) * (m1s + t) * (m2s + t))
