"""Walkthrough: PV coefficients, the response kernel, and linear screening.

Run with ``python3 notebooks/kernel_and_screening.py``.  Everything here
finishes in a few seconds; results are printed rather than plotted, and the
CSV files written under ``notebooks/out`` are ready for any plotting tool.
"""
from pathlib import Path
import warnings

import numpy as np

from dirac_vacuum import Grid3, KernelTable, SourceDensities, derive_scheme, m_kernel, solve_linear_response
from dirac_vacuum.fields import coulomb_solve, gaussian_density
from dirac_vacuum.kernel import kernel_gap, m_zero

OUT = Path(__file__).with_name("out")

# %% A scheme is fixed by three masses; the two regulator coefficients follow.
scheme = derive_scheme((1.0, 2.0, 3.0))
print("c =", scheme.coefficients, " log Lambda =", round(scheme.log_lambda, 7), " Lambda =", round(scheme.cutoff, 5))

# %% The kernel starts at 2 log(Lambda) / (3 pi) and decays monotonically.
k = np.linspace(0.0, 10.0, 11)
print("M(0) =", m_zero(scheme))
for kk, mm in zip(k, m_kernel(scheme, k)):
    print(f"  k={kk:5.1f}  M={mm:.6f}")
KernelTable.build(scheme, np.linspace(0, 10, 64)).to_csv(OUT / "kernel_123.csv")

# %% Moving the regulators away shrinks the distance to the Uehling shape.
for s in (2, 3, 4):
    heavy = derive_scheme((1.0, 10.0 ** s, 2 * 10.0 ** s))
    print(f"regulators at 10^{s}: max |gap| = {np.max(np.abs(kernel_gap(heavy, k))):.2e}")

# %% Screening of a smooth charge: each Fourier mode is divided by 1 + e^2 M(k).
grid = Grid3(16, 8.0)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")  # the neutralizing background is removed on purpose
    src = SourceDensities.admissible(gaussian_density(grid, 1.0, 1.0))
bare = coulomb_solve(src.rho_ext)
for e in (0.0, 0.3, 1.0):
    v = solve_linear_response(scheme, src, e, grid, unit_charge=True).v
    print(f"e={e:3.1f}: V at the centre {v.values[8, 8, 8]:.6f} (bare {bare.values[8, 8, 8]:.6f})")
