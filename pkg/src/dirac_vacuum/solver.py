"""Screened and self-consistent Maxwell equations in the Dirac vacuum.

The effective Lagrangian on the lattice is

    L(V, A) = -F_PV(e(V, A)) + (||grad V||^2 - ||curl A||^2) / (8 pi)
              - e <rho_ext, V> + e <j_ext, A>,

with ``<f, g> = h^3 sum_x f g``.  Its stationarity conditions are the
self-consistent equations

    -Lap V = 4 pi e (rho_{eA} + rho_ext),   -Lap A = 4 pi e P_T (j_{eA} + j_ext),

which :func:`solve_self_consistent` solves by damped fixed-point iteration.
Near the saddle the vacuum terms respond like ``-e^2 M`` times the classical
ones, so the undamped map contracts by roughly ``e^2 M(0)`` per step.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .fields import (FourPotential, Grid3, ScalarField, SourceDensities, VectorField, curl_field,
                     field_norms, gradient_field, transverse_coefficients)
from .kernel import kernel_on_grid
from .lattice import DEFAULT_CAPACITY, DEFAULT_WILSON, VacuumState, pv_energy, vacuum_state
from .pv import PVScheme


@dataclass
class SaddleConfig:
    """Settings for :func:`solve_self_consistent`.

    ``trust_radius_v`` and ``trust_radius_a`` bound ``||grad V||`` and
    ``||curl A||``; when left as ``None`` they default to
    ``trust_r * sqrt(m0) / (3 e)``.
    """

    coupling: float
    damping: float = 0.5
    max_iter: int = 200
    residual_tol: float = 1e-8
    trust_r: float = 0.1
    trust_radius_v: float | None = None
    trust_radius_a: float | None = None
    wilson: float = DEFAULT_WILSON
    capacity: int = DEFAULT_CAPACITY

    def __post_init__(self):
        if not (0 < self.damping <= 1):
            raise InvalidInputError(f"damping must lie in (0, 1], got {self.damping!r}")
        if not self.coupling >= 0:
            raise InvalidInputError(f"coupling must be >= 0, got {self.coupling!r}")
        if not self.residual_tol > 0:
            raise InvalidInputError("residual_tol must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 0:
            raise InvalidInputError("max_iter must be a non-negative integer")
        if not self.trust_r > 0:
            raise InvalidInputError("trust_r must be positive")
        for name in ("trust_radius_v", "trust_radius_a"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise InvalidInputError(f"{name} must be positive")

    def radii(self, scheme: PVScheme) -> tuple:
        if self.coupling == 0:
            default = np.inf
        else:
            default = self.trust_r * np.sqrt(scheme.masses.m0) / (3 * self.coupling)
        rv = default if self.trust_radius_v is None else self.trust_radius_v
        ra = default if self.trust_radius_a is None else self.trust_radius_a
        return float(rv), float(ra)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveReport:
    """Outcome of a self-consistent solve."""

    potential: FourPotential
    status: str
    residual_history: list
    iterations: int
    lagrangian: float
    clipped_history: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")

    def to_dict(self) -> dict:
        norms = field_norms(self.potential)
        return {
            "status": self.status,
            "iterations": self.iterations,
            "residual_history": [float(r) for r in self.residual_history],
            "clipped_history": [bool(c) for c in self.clipped_history],
            "lagrangian": float(self.lagrangian),
            "sobolev_norm": norms[0],
            "maxwell_action": norms[1],
            "config": self.config,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(text)
        return text


# ---------------------------------------------------------------------------
# Helpers on Fourier coefficients (unitary DFT)

def _poisson_coeffs(grid: Grid3, coeffs: np.ndarray) -> np.ndarray:
    k2 = grid.momentum_sq
    return np.where(k2 > 0, coeffs / np.where(k2 > 0, k2, 1.0), 0.0)


def _rhs_coeffs(grid: Grid3, rho: ScalarField, j: VectorField, e: float) -> tuple:
    """``4 pi e`` times the admissible parts of ``rho`` and ``j``, in Fourier space."""
    null = grid.null_modes
    rv = np.where(null, 0.0, 4 * np.pi * e * rho.fourier)
    ra = np.where(null, 0.0, 4 * np.pi * e * transverse_coefficients(grid, j.fourier))
    return rv, ra


def _l2_from_coeffs(grid: Grid3, coeffs: np.ndarray) -> float:
    return float(np.sqrt(grid.cell_volume * np.sum(np.abs(coeffs) ** 2)))


def _source_scale(grid: Grid3, sources: SourceDensities, e: float) -> float:
    rv, ra = _rhs_coeffs(grid, sources.rho_ext, sources.j_ext, e)
    scale = float(np.hypot(_l2_from_coeffs(grid, rv), _l2_from_coeffs(grid, ra)))
    return scale if scale > 0 else 1.0


def _residual_from_state(A: FourPotential, sources: SourceDensities, state: VacuumState, e: float) -> tuple:
    grid = A.grid
    rv, ra = _rhs_coeffs(grid, state.rho + sources.rho_ext, state.current + sources.j_ext, e)
    k2 = grid.momentum_sq
    res_v = _l2_from_coeffs(grid, k2 * A.v.fourier - rv)
    res_a = _l2_from_coeffs(grid, k2 * A.a.fourier - ra)
    scale = _source_scale(grid, sources, e)
    return res_v / scale, res_a / scale


def _picard_image(A: FourPotential, sources: SourceDensities, state: VacuumState, e: float) -> FourPotential:
    grid = A.grid
    rv, ra = _rhs_coeffs(grid, state.rho + sources.rho_ext, state.current + sources.j_ext, e)
    return FourPotential.from_fourier(grid, _poisson_coeffs(grid, rv), _poisson_coeffs(grid, ra))


def _clip(A: FourPotential, rv: float, ra: float) -> tuple:
    ev = gradient_field(A.v).l2_norm()
    bv = curl_field(A.a).l2_norm()
    clipped = False
    v, a = A.v, A.a
    if ev > rv:
        v = v * (rv / ev)
        clipped = True
    if bv > ra:
        a = a * (ra / bv)
        clipped = True
    return (FourPotential(v, a) if clipped else A), clipped


def _check_inputs(scheme, sources, grid, e):
    if not isinstance(scheme, PVScheme):
        raise InvalidInputError("scheme must be a PVScheme")
    if not isinstance(sources, SourceDensities):
        raise InvalidInputError("sources must be SourceDensities (use SourceDensities.admissible)")
    grid.check_same(sources.grid)
    if not (np.isfinite(e) and e >= 0):
        raise InvalidInputError(f"coupling must be finite and >= 0, got {e!r}")


# ---------------------------------------------------------------------------
# Public operations

def screening_factor(scheme: PVScheme, grid: Grid3, e: float) -> np.ndarray:
    """``1 + e^2 M(|k|)`` on the symmetric momentum grid (ones on the null modes)."""
    screen = np.ones(grid.shape)
    if e > 0:
        populated = ~grid.null_modes
        screen[populated] = 1.0 + e ** 2 * kernel_on_grid(scheme, grid.momentum_norm[populated])
    return screen


def solve_linear_response(scheme: PVScheme, sources: SourceDensities, e: float, grid: Grid3,
                          unit_charge: bool = False) -> FourPotential:
    """Screened potentials ``4 pi e s(k) / (|k|^2 (1 + e^2 M(|k|)))``.

    ``s`` is ``rho_ext`` for ``V`` and the transverse part of ``j_ext`` for
    ``A``; null modes are set to zero.  ``M`` is the continuum kernel at the
    symmetric grid momenta.  ``unit_charge=True`` drops the overall factor
    ``e`` (keeping the screening), which makes the ``e = 0`` result the
    classical Coulomb-gauge solution.
    """
    _check_inputs(scheme, sources, grid, e)
    rv, ra = _rhs_coeffs(grid, sources.rho_ext, sources.j_ext, 1.0 if unit_charge else e)
    screen = screening_factor(scheme, grid, e)
    return FourPotential.from_fourier(grid, _poisson_coeffs(grid, rv) / screen,
                                      _poisson_coeffs(grid, ra) / screen)


def scf_residual(A: FourPotential, sources: SourceDensities, scheme: PVScheme, e: float, grid: Grid3,
                 wilson: float = DEFAULT_WILSON, capacity: int = DEFAULT_CAPACITY) -> tuple:
    """Relative residuals ``(res_v, res_a)`` of the self-consistent equations.

    Each is the discrete L^2 norm of ``-Lap V - 4 pi e (rho_{eA} + rho_ext)``
    (respectively the transverse current equation), divided by the norm of
    the classical right-hand side ``4 pi e (rho_ext, P_T j_ext)``.  With no
    sources the raw norms are returned.
    """
    _check_inputs(scheme, sources, grid, e)
    grid.check_same(A.grid)
    state = vacuum_state(scheme, grid, A, e, wilson, capacity)
    return _residual_from_state(A, sources, state, e)


def lagrangian_value(A: FourPotential, sources: SourceDensities, scheme: PVScheme, e: float, grid: Grid3,
                     wilson: float = DEFAULT_WILSON, capacity: int = DEFAULT_CAPACITY,
                     f_pv: float | None = None) -> float:
    """``-F_PV(eA) + maxwell_action - e <rho_ext, V> + e <j_ext, A>``.

    ``f_pv`` may be passed when the vacuum energy is already known.
    """
    _check_inputs(scheme, sources, grid, e)
    grid.check_same(A.grid)
    if f_pv is None:
        f_pv = pv_energy(scheme, grid, A, e, wilson, capacity)
    maxwell = field_norms(A)[1]
    src = e * (sources.rho_ext.inner(A.v) - sources.j_ext.inner(A.a))
    return float(-f_pv + maxwell - src)


def solve_self_consistent(scheme: PVScheme, sources: SourceDensities, grid: Grid3, config: SaddleConfig,
                          initial: FourPotential | str | None = None, callback=None) -> SolveReport:
    """Damped fixed-point iteration for the self-consistent Maxwell equations.

    Parameters
    ----------
    initial : FourPotential, ``"linear"`` or None
        Starting potential; ``"linear"`` uses :func:`solve_linear_response`.
    callback : callable, optional
        Called as ``callback(iteration, residual, potential)``.

    Returns
    -------
    SolveReport
        ``status`` is ``"converged"``, ``"boundary-hit"`` (the final iterate
        was clipped to the trust region) or ``"max-iter"``.
    """
    e = config.coupling
    _check_inputs(scheme, sources, grid, e)
    rv_max, ra_max = config.radii(scheme)
    if initial is None:
        A = FourPotential.zeros(grid)
    elif isinstance(initial, str):
        if initial != "linear":
            raise InvalidInputError(f"unknown initialization {initial!r}")
        A = solve_linear_response(scheme, sources, e, grid)
    else:
        grid.check_same(initial.grid)
        A = initial
    A, clipped = _clip(A, rv_max, ra_max)
    history, clips = [], [clipped]
    tau = config.damping
    status = "max-iter"
    iterations = 0
    state = None
    while True:
        state = vacuum_state(scheme, grid, A, e, config.wilson, config.capacity)
        res = max(_residual_from_state(A, sources, state, e))
        history.append(res)
        if callback is not None:
            callback(iterations, res, A)
        if res <= config.residual_tol:
            status = "converged"
            break
        if iterations >= config.max_iter:
            break
        image = _picard_image(A, sources, state, e)
        A = A * (1 - tau) + image * tau if tau < 1 else image
        A, clipped = _clip(A, rv_max, ra_max)
        clips.append(clipped)
        iterations += 1
    if clips[-1]:
        status = "boundary-hit"
    lag = lagrangian_value(A, sources, scheme, e, grid, config.wilson, config.capacity, f_pv=state.energy)
    cfg = config.to_dict()
    cfg.update({"trust_radius_v_resolved": rv_max, "trust_radius_a_resolved": ra_max,
                "scheme": scheme.to_dict(), "grid": grid.to_dict()})
    return SolveReport(A, status, history, iterations, lag, clips, cfg)


@dataclass
class SaddleProbeReport:
    """Second differences of the Lagrangian along probe directions."""

    kinds: list
    second_differences: list
    step: float

    @property
    def signs_ok(self) -> bool:
        for kind, val in zip(self.kinds, self.second_differences):
            if kind == "V" and not val > 0:
                return False
            if kind == "A" and not val < 0:
                return False
        return True


def direction_kind(d: FourPotential) -> str:
    has_v = bool(np.any(d.v.values))
    has_a = bool(np.any(d.a.values))
    return "mixed" if (has_v and has_a) else ("V" if has_v else "A")


def saddle_probe(A_star: FourPotential, scheme: PVScheme, e: float, grid: Grid3, directions,
                 sources: SourceDensities | None = None, step: float = 0.05,
                 wilson: float = DEFAULT_WILSON, capacity: int = DEFAULT_CAPACITY) -> SaddleProbeReport:
    """Central second differences ``(L(A* + s d) - 2 L(A*) + L(A* - s d)) / s^2``.

    ``s`` is ``step`` divided by the Sobolev norm of each direction.  The
    source terms are linear and drop out, so ``sources`` only matters for
    the reported scale.  Pure ``V`` directions should give positive values,
    pure divergence-free ``A`` directions negative ones.
    """
    sources = SourceDensities.zeros(grid) if sources is None else sources
    lag = lambda pot: lagrangian_value(pot, sources, scheme, e, grid, wilson, capacity)
    center = lag(A_star)
    kinds, values = [], []
    for d in directions:
        s = step / field_norms(d)[0]
        plus = lag(A_star + d * s)
        minus = lag(A_star - d * s)
        kinds.append(direction_kind(d))
        values.append(float((plus - 2 * center + minus) / s ** 2))
    return SaddleProbeReport(kinds, values, step)


def single_mode_direction(grid: Grid3, kvec, kind: str, phase: float = 0.0, polarization=None) -> FourPotential:
    """Real single-mode probe ``cos(k.x + phase)`` in ``V`` or a transverse ``A``.

    ``kvec`` holds integer mode numbers.  For ``kind="A"`` the polarization
    is projected transverse to ``k`` (a default one is chosen when omitted).
    """
    kvec = np.asarray(kvec, dtype=float)
    kphys = 2 * np.pi * kvec / grid.box_length
    wave = np.cos(np.tensordot(kphys, grid.coordinates, axes=1) + phase)
    if kind == "V":
        return FourPotential.from_arrays(grid, v=wave)
    if kind != "A":
        raise InvalidInputError(f"kind must be 'V' or 'A', got {kind!r}")
    if polarization is None:
        trial = np.eye(3)[int(np.argmin(np.abs(kvec)))]
        polarization = np.cross(kvec, trial)
    pol = np.asarray(polarization, dtype=float)
    pol = pol - kvec * (pol @ kvec) / (kvec @ kvec)
    if np.linalg.norm(pol) == 0:
        raise InvalidInputError("polarization is parallel to k")
    pol /= np.linalg.norm(pol)
    return FourPotential.from_arrays(grid, a=pol[:, None, None, None] * wave[None])
