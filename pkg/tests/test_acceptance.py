"""Acceptance suite: one test per criterion, thresholds written out literally.

Each test prints a single PASS/FAIL line; the lines are repeated in a
terminal-summary section at the end of the pytest run.  The wall-clock
budget of each criterion is part of its pass condition.
"""
import time

import numpy as np
import pytest

from dirac_vacuum.fields import Grid3, coulomb_solve, field_norms
from dirac_vacuum.kernel import kernel_gap, m_kernel, m_zero, uehling_kernel
from dirac_vacuum.lattice import (build_operator, pv_energy, quadratic_response, random_gauge_function,
                                  remainder_scaling, spectrum)
from dirac_vacuum.pv import derive_scheme
from dirac_vacuum.solver import (SaddleConfig, saddle_probe, scf_residual, single_mode_direction,
                                 solve_linear_response, solve_self_consistent)
from dirac_vacuum.verification import SCF_BOX, SCF_CHARGE, SCF_WIDTH, gaussian_sources, random_mass_triple, random_potential

pytestmark = pytest.mark.slow


@pytest.fixture
def scheme():
    return derive_scheme((1.0, 2.0, 3.0))


def test_criterion_01_pv_identities(acceptance_report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst0 = worst2 = 0.0
    signs = True
    for _ in range(1000):
        s = derive_scheme(random_mass_triple(rng))
        m = s.mass_array
        c = s.coefficients
        worst0 = max(worst0, abs(c.sum()))
        worst2 = max(worst2, abs(c @ m ** 2) / m[2] ** 2)
        signs = signs and s.c1 < 0 < s.c2
    elapsed = time.perf_counter() - t0
    ok = worst0 <= 1e-12 and worst2 <= 1e-12 and signs and elapsed < 1.0
    assert acceptance_report(1, "PV identities", ok, elapsed, 1,
                             f"max|sum c|={worst0:.2e}, max|sum c m^2|/m2^2={worst2:.2e}, signs={signs}")


def test_criterion_02_kernel_bound(acceptance_report, scheme):
    t0 = time.perf_counter()
    k = np.linspace(0.0, 10.0, 64)
    m = m_kernel(scheme, k)
    target = 2 * scheme.log_lambda / (3 * np.pi)
    dev = abs(m[0] - target)
    positive = bool(np.all(m > 0))
    bounded = bool(np.all(m <= m[0]))
    monotone = bool(np.all(np.diff(m) <= 0))
    elapsed = time.perf_counter() - t0
    ok = dev <= 1e-8 and abs(target - 0.095465) < 5e-7 and positive and bounded and monotone and elapsed < 5
    assert acceptance_report(2, "kernel bound", ok, elapsed, 5,
                             f"M(0)={m[0]:.7f}, |M(0)-2logL/3pi|={dev:.1e}, positive={positive}, "
                             f"bounded={bounded}, non-increasing={monotone}")


def test_criterion_03_uehling_limit(acceptance_report):
    t0 = time.perf_counter()
    k = np.linspace(0.0, 10.0, 201)
    gaps = []
    for s in (2, 3, 4):
        sch = derive_scheme((1.0, 10.0 ** s, 2 * 10.0 ** s))
        # |2 log L/(3 pi) - M(k) - U(k)| evaluated with the cancellation-free screened part
        gaps.append(float(np.max(np.abs(kernel_gap(sch, k)))))
    # cross-check the direct difference at s=2 where it is well conditioned
    sch2 = derive_scheme((1.0, 100.0, 200.0))
    direct = np.max(np.abs((m_zero(sch2) - m_kernel(sch2, k) - uehling_kernel(k, 1.0)) - kernel_gap(sch2, k)))
    elapsed = time.perf_counter() - t0
    ok = gaps[0] > gaps[1] > gaps[2] and gaps[2] <= 1e-5 and direct <= 1e-9 and elapsed < 30
    assert acceptance_report(3, "Uehling limit", ok, elapsed, 30,
                             "max gaps s=2,3,4: " + ", ".join(f"{g:.2e}" for g in gaps))


def test_criterion_04_furry_gauge(acceptance_report, scheme):
    t0 = time.perf_counter()
    grid = Grid3(6, 4.0)
    rng = np.random.default_rng(1)
    worst_f = worst_g = 0.0
    for _ in range(5):
        pot = random_potential(grid, rng)
        f = pv_energy(scheme, grid, pot, 1.0)
        worst_f = max(worst_f, abs(f - pv_energy(scheme, grid, -pot, 1.0)) / (1e-9 * (1 + abs(f))))
        shifted = pot.gauge_shift(random_gauge_function(grid, rng))
        worst_g = max(worst_g, abs(f - pv_energy(scheme, grid, shifted, 1.0)) / (1e-9 * (1 + abs(f))))
    elapsed = time.perf_counter() - t0
    ok = worst_f <= 1 and worst_g <= 1 and elapsed < 120
    assert acceptance_report(4, "Furry / gauge", ok, elapsed, 120,
                             f"worst Furry defect {worst_f:.1e} and gauge defect {worst_g:.1e} "
                             "in units of 1e-9(1+|F|)")


def test_criterion_05_quadratic_response(acceptance_report, scheme):
    t0 = time.perf_counter()
    grid6 = Grid3(6, 4.0)
    q6 = quadratic_response(scheme, grid6, random_potential(grid6, np.random.default_rng(2)), 1.0)
    rel_oracle = q6.fd_vs_oracle
    grid16 = Grid3(16, 5.5)
    d = single_mode_direction(grid16, (1, 0, 0), "A", polarization=(0, 1, 0))
    d = d * (1.0 / field_norms(d)[0])
    q16 = quadratic_response(scheme, grid16, d, 1.0, oracle=False)
    rel_f2 = q16.fd_vs_f2
    elapsed = time.perf_counter() - t0
    ok = rel_oracle <= 1e-6 and abs(rel_f2) <= 0.05 and elapsed < 600
    assert acceptance_report(5, "quadratic response", ok, elapsed, 600,
                             f"n=6 fd vs oracle rel={rel_oracle:.1e}; n=16 single mode vs F2 rel={rel_f2:+.3f}")


def test_criterion_06_remainder_scaling(acceptance_report, scheme):
    t0 = time.perf_counter()
    grid = Grid3(6, 4.0)
    rep = remainder_scaling(scheme, grid, random_potential(grid, np.random.default_rng(3)), 1.0, eps0=1.0)
    elapsed = time.perf_counter() - t0
    ok = 3.7 <= rep.exponent <= 4.3 and elapsed < 180
    assert acceptance_report(6, "remainder scaling", ok, elapsed, 180,
                             f"fitted exponent {rep.exponent:.4f} over eps={[float(x) for x in rep.epsilons]}")


def test_criterion_07_magnetic_gap(acceptance_report, scheme):
    t0 = time.perf_counter()
    grid = Grid3(6, 4.0)
    rng = np.random.default_rng(4)
    worst = np.inf
    for _ in range(5):
        pot = random_potential(grid, rng, norm=3.0, electric=False)
        assert np.all(pot.v.values == 0)
        for m in scheme.mass_array:
            worst = min(worst, spectrum(build_operator(grid, m, pot, 1.0)).gap - m)
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-10 and elapsed < 60
    assert acceptance_report(7, "magnetic gap", ok, elapsed, 60, f"min over fields and masses of gap - m = {worst:.3e}")


def test_criterion_08_linear_screening(acceptance_report, scheme):
    t0 = time.perf_counter()
    grid = Grid3(8, 6.0)
    src = gaussian_sources(grid, 1.0, 1.0)
    classical = coulomb_solve(src.rho_ext).fourier
    v0 = solve_linear_response(scheme, src, 0.0, grid, unit_charge=True).v.fourier
    ve = solve_linear_response(scheme, src, 0.3, grid, unit_charge=True).v.fourier
    err = float(np.max(np.abs(v0 - classical)) / np.abs(classical).max())
    rho_hat = np.abs(src.rho_ext.fourier)
    populated = ~grid.null_modes & (rho_hat > 1e-14 * rho_hat.max())
    below = bool(np.all(np.abs(ve[populated]) < np.abs(classical[populated])))
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-12 and below and elapsed < 5
    assert acceptance_report(8, "linear screening", ok, elapsed, 5,
                             f"e=0 rel err {err:.1e}; e=0.3 strictly below on all {int(populated.sum())} modes: {below}")


def test_criterion_09_self_consistent_saddle(acceptance_report, scheme):
    t0 = time.perf_counter()
    e = 0.3
    grid = Grid3(8, SCF_BOX)
    src = gaussian_sources(grid, SCF_CHARGE, SCF_WIDTH)
    cfg = SaddleConfig(coupling=e, damping=1.0)
    rep0 = solve_self_consistent(scheme, src, grid, cfg)
    rep1 = solve_self_consistent(scheme, src, grid, cfg, initial="linear")
    residual = max(rep0.final_residual, rep1.final_residual)
    agree = field_norms(rep0.potential - rep1.potential)[0]
    rng = np.random.default_rng(6)
    dirs = [random_potential(grid, rng, magnetic=False), random_potential(grid, rng, electric=False)]
    probe = saddle_probe(rep0.potential, scheme, e, grid, dirs, sources=src)
    elapsed = time.perf_counter() - t0
    ok = (rep0.converged and rep1.converged and residual <= 1e-8 and agree <= 1e-6 and probe.signs_ok
          and elapsed < 600)
    assert acceptance_report(9, "self-consistent saddle", ok, elapsed, 600,
                             f"status {rep0.status}/{rep1.status}, iterations {rep0.iterations}/{rep1.iterations}, "
                             f"residual {residual:.1e}, init agreement {agree:.1e}, "
                             f"probe V={probe.second_differences[0]:+.3e} A={probe.second_differences[1]:+.3e}")


def test_criterion_10_linear_consistency_order(acceptance_report, scheme):
    t0 = time.perf_counter()
    grid = Grid3(8, SCF_BOX)
    src = gaussian_sources(grid, SCF_CHARGE, SCF_WIDTH)
    gaps = []
    for e in (0.3, 0.15):
        rep = solve_self_consistent(scheme, src, grid, SaddleConfig(coupling=e, damping=1.0), initial="linear")
        assert rep.converged
        gaps.append(field_norms(rep.potential - solve_linear_response(scheme, src, e, grid))[0])
    ratio = gaps[0] / gaps[1]
    elapsed = time.perf_counter() - t0
    ok = 6 <= ratio <= 10 and elapsed < 900
    assert acceptance_report(10, "linear-consistency order", ok, elapsed, 900,
                             f"gaps {gaps[0]:.3e} -> {gaps[1]:.3e}, ratio {ratio:.3f}")
