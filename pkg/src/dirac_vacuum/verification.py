"""Property checks behind ``verify`` and the acceptance tests.

Each check returns a :class:`CheckResult` carrying the measured quantities,
so callers can compare them against their own thresholds.  The ``quick``
profile shrinks lattices to ``n <= 6`` and skips nothing; the ``full``
profile uses the sizes of the acceptance suite.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .fields import FourPotential, Grid3, SourceDensities, coulomb_solve, field_norms, gaussian_density
from .kernel import kernel_gap, m_kernel, m_zero
from .lattice import (build_operator, charge_conjugation_check, pv_energy, quadratic_response,
                      random_gauge_function, remainder_scaling, spectrum)
from .pv import MassSpectrum, derive_scheme
from .solver import (SaddleConfig, saddle_probe, scf_residual, single_mode_direction, solve_linear_response,
                     solve_self_consistent)


@dataclass
class CheckResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.metrics.items())
        return f"[{tag}] {self.name} ({self.elapsed:.1f}s): {shown}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.elapsed = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def random_potential(grid: Grid3, rng: np.random.Generator, norm: float = 1.0, electric: bool = True,
                     magnetic: bool = True) -> FourPotential:
    """Random admissible potential rescaled to the given Sobolev norm."""
    v = rng.standard_normal(grid.shape) if electric else None
    a = rng.standard_normal((3,) + grid.shape) if magnetic else None
    pot = FourPotential.from_arrays(grid, v, a)
    return pot * (norm / field_norms(pot)[0])


def gaussian_sources(grid: Grid3, charge: float, width: float) -> SourceDensities:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return SourceDensities.admissible(gaussian_density(grid, charge, width))


def random_mass_triple(rng: np.random.Generator, low: float = 0.1, high: float = 100.0,
                       min_split: float = 1e-3) -> MassSpectrum:
    """Sorted uniform masses on ``[low, high]`` with distinct, separated regulators.

    Triples whose regulator masses differ by less than ``min_split * m2`` are
    redrawn.  For such triples ``|c_j|`` grows like ``m2 / (m2 - m1)`` and the
    PV identities can only hold to about ``eps * |c_j|`` for any
    double-precision coefficients.
    """
    while True:
        m = np.sort(rng.uniform(low, high, 3))
        if m[0] < m[1] and (m[2] - m[1]) >= min_split * m[2]:
            return MassSpectrum(*m)


# ---------------------------------------------------------------------------

@_timed
def check_pv_identities(count: int = 1000, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst0 = worst2 = 0.0
    signs = True
    for _ in range(count):
        s = derive_scheme(random_mass_triple(rng))
        m = s.mass_array
        c = s.coefficients
        worst0 = max(worst0, abs(c.sum()))
        worst2 = max(worst2, abs(c @ m ** 2) / m[2] ** 2)
        signs &= bool(s.c1 < 0 < s.c2)
    ok = worst0 <= tol and worst2 <= tol and signs
    return CheckResult("pv-identities", ok, {"max_sum_c": worst0, "max_sum_cm2": worst2, "signs": signs})


@_timed
def check_kernel_bound(points: int = 64, kmax: float = 10.0) -> CheckResult:
    s = derive_scheme((1.0, 2.0, 3.0))
    k = np.linspace(0.0, kmax, points)
    m = m_kernel(s, k)
    dev = abs(m[0] - m_zero(s))
    ok = dev <= 1e-8 and bool(np.all(m > 0)) and bool(np.all(m <= m[0])) and bool(np.all(np.diff(m) <= 0))
    return CheckResult("kernel-bound", ok, {"M0": float(m[0]), "M0_dev": float(dev), "min_M": float(m.min()),
                                            "max_increase": float(np.max(np.diff(m)))})


@_timed
def check_uehling_limit(exponents=(2, 3, 4), points: int = 201, kmax: float = 10.0) -> CheckResult:
    k = np.linspace(0.0, kmax, points)
    gaps = [float(np.max(np.abs(kernel_gap(derive_scheme((1.0, 10.0 ** s, 2 * 10.0 ** s)), k))))
            for s in exponents]
    ok = all(b < a for a, b in zip(gaps, gaps[1:])) and gaps[-1] <= 1e-5
    return CheckResult("uehling-limit", ok, {"max_gaps": gaps})


@_timed
def check_furry_gauge(n: int = 6, box: float = 4.0, count: int = 5, e: float = 1.0, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    grid = Grid3(n, box)
    s = derive_scheme((1.0, 2.0, 3.0))
    worst_f = worst_g = 0.0
    for _ in range(count):
        pot = random_potential(grid, rng)
        f = pv_energy(s, grid, pot, e)
        fm = pv_energy(s, grid, -pot, e)
        fg = pv_energy(s, grid, pot.gauge_shift(random_gauge_function(grid, rng)), e)
        worst_f = max(worst_f, abs(f - fm) / (1 + abs(f)))
        worst_g = max(worst_g, abs(f - fg) / (1 + abs(f)))
    ok = worst_f <= 1e-9 and worst_g <= 1e-9
    return CheckResult("furry-gauge", ok, {"furry": worst_f, "gauge": worst_g})


@_timed
def check_quadratic_oracle(n: int = 6, box: float = 4.0, e: float = 1.0, seed: int = 2) -> CheckResult:
    grid = Grid3(n, box)
    s = derive_scheme((1.0, 2.0, 3.0))
    q = quadratic_response(s, grid, random_potential(grid, np.random.default_rng(seed)), e)
    rel = q.fd_vs_oracle
    return CheckResult("quadratic-oracle", rel <= 1e-6,
                       {"fd": q.fd_hessian, "oracle": q.oracle_hessian, "rel": rel,
                        "first_derivative": q.first_derivative})


@_timed
def check_single_mode(n: int = 16, box: float = 5.5, e: float = 1.0, tol: float = 0.05) -> CheckResult:
    grid = Grid3(n, box)
    s = derive_scheme((1.0, 2.0, 3.0))
    d = single_mode_direction(grid, (1, 0, 0), "A", polarization=(0, 1, 0))
    d = d * (1.0 / field_norms(d)[0])
    q = quadratic_response(s, grid, d, e, oracle=False)
    rel = q.fd_vs_f2
    return CheckResult("single-mode-f2", abs(rel) <= tol,
                       {"fd": q.fd_hessian, "f2_prediction": q.f2_prediction, "rel": rel})


@_timed
def check_remainder(n: int = 6, box: float = 4.0, e: float = 1.0, eps0: float = 1.0, seed: int = 3) -> CheckResult:
    grid = Grid3(n, box)
    s = derive_scheme((1.0, 2.0, 3.0))
    rep = remainder_scaling(s, grid, random_potential(grid, np.random.default_rng(seed)), e, eps0=eps0)
    ok = 3.7 <= rep.exponent <= 4.3
    return CheckResult("remainder-scaling", ok, {"exponent": rep.exponent,
                                                 "remainders": rep.remainders.tolist(),
                                                 "evenness": rep.evenness_defect})


@_timed
def check_magnetic_gap(n: int = 6, box: float = 4.0, count: int = 5, e: float = 1.0, norm: float = 3.0,
                       seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    grid = Grid3(n, box)
    s = derive_scheme((1.0, 2.0, 3.0))
    worst = np.inf
    for _ in range(count):
        pot = random_potential(grid, rng, norm=norm, electric=False)
        for m in s.mass_array:
            gap = spectrum(build_operator(grid, m, pot, e)).gap
            worst = min(worst, gap - m)
    return CheckResult("magnetic-gap", worst >= -1e-10, {"min_gap_minus_mass": float(worst)})


@_timed
def check_charge_conjugation(n: int = 4, box: float = 3.0, e: float = 1.0, seed: int = 5) -> CheckResult:
    grid = Grid3(n, box)
    pot = random_potential(grid, np.random.default_rng(seed))
    rep = charge_conjugation_check(build_operator(grid, 1.0, pot, e))
    return CheckResult("charge-conjugation", rep.passed, {"matrix": rep.matrix_defect, "spectrum": rep.spectrum_defect})


@_timed
def check_linear_screening(n: int = 8, box: float = 6.0, e: float = 0.3) -> CheckResult:
    grid = Grid3(n, box)
    s = derive_scheme((1.0, 2.0, 3.0))
    src = gaussian_sources(grid, 1.0, 1.0)
    classical = coulomb_solve(src.rho_ext).fourier
    v0 = solve_linear_response(s, src, 0.0, grid, unit_charge=True).v.fourier
    ve = solve_linear_response(s, src, e, grid, unit_charge=True).v.fourier
    err = float(np.max(np.abs(v0 - classical)) / np.abs(classical).max())
    populated = np.abs(src.rho_ext.fourier) > 1e-14 * np.abs(src.rho_ext.fourier).max()
    below = bool(np.all(np.abs(ve[populated]) < np.abs(classical[populated])))
    return CheckResult("linear-screening", err <= 1e-12 and below,
                       {"classical_rel_err": err, "strictly_below": below, "populated_modes": int(populated.sum())})


SCF_BOX = 6.0
SCF_CHARGE = 0.1
SCF_WIDTH = 1.0


@_timed
def check_self_consistent(n: int = 8, e: float = 0.3, damping: float = 1.0, seed: int = 6) -> CheckResult:
    grid = Grid3(n, SCF_BOX)
    s = derive_scheme((1.0, 2.0, 3.0))
    src = gaussian_sources(grid, SCF_CHARGE, SCF_WIDTH)
    cfg = SaddleConfig(coupling=e, damping=damping)
    rep0 = solve_self_consistent(s, src, grid, cfg)
    rep1 = solve_self_consistent(s, src, grid, cfg, initial="linear")
    agree = field_norms(rep0.potential - rep1.potential)[0]
    res = max(scf_residual(rep0.potential, src, s, e, grid))
    rng = np.random.default_rng(seed)
    dirs = [random_potential(grid, rng, magnetic=False), random_potential(grid, rng, electric=False)]
    probe = saddle_probe(rep0.potential, s, e, grid, dirs, sources=src)
    ok = rep0.converged and rep1.converged and res <= 1e-8 and agree <= 1e-6 and probe.signs_ok
    return CheckResult("self-consistent", ok, {"status": rep0.status, "iterations": rep0.iterations,
                                               "residual": res, "init_agreement": agree,
                                               "probe": probe.second_differences})


@_timed
def check_linear_order(n: int = 8, e: float = 0.3, damping: float = 1.0) -> CheckResult:
    grid = Grid3(n, SCF_BOX)
    s = derive_scheme((1.0, 2.0, 3.0))
    src = gaussian_sources(grid, SCF_CHARGE, SCF_WIDTH)
    gaps = []
    for ee in (e, e / 2):
        rep = solve_self_consistent(s, src, grid, SaddleConfig(coupling=ee, damping=damping), initial="linear")
        lin = solve_linear_response(s, src, ee, grid)
        gaps.append(field_norms(rep.potential - lin)[0])
    ratio = gaps[0] / gaps[1]
    return CheckResult("linear-order", 6 <= ratio <= 10, {"gaps": gaps, "ratio": ratio})


def run_suite(profile: str = "quick"):
    """Run every check for ``profile`` in ``{"quick", "full"}``; yields results."""
    if profile == "quick":
        checks = [
            lambda: check_pv_identities(),
            lambda: check_kernel_bound(),
            lambda: check_uehling_limit(),
            lambda: check_furry_gauge(n=4, box=3.0, count=3),
            lambda: check_charge_conjugation(),
            lambda: check_quadratic_oracle(n=4, box=3.0),
            lambda: check_single_mode(n=8, box=4.0, tol=0.25),
            lambda: check_remainder(n=4, box=3.0),
            lambda: check_magnetic_gap(n=4, box=3.0),
            lambda: check_linear_screening(n=6),
            lambda: check_self_consistent(n=4),
            lambda: check_linear_order(n=4),
        ]
    elif profile == "full":
        checks = [
            check_pv_identities, check_kernel_bound, check_uehling_limit, check_furry_gauge,
            check_charge_conjugation, check_quadratic_oracle, check_single_mode, check_remainder,
            check_magnetic_gap, check_linear_screening, check_self_consistent, check_linear_order,
        ]
    else:
        raise ValueError(f"unknown profile {profile!r}")
    for check in checks:
        yield check()
