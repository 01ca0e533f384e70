"""Pauli-Villars regulated Dirac vacuum: response kernels, lattice operators and solvers."""
from .errors import CapacityError, DegenerateVacuumError, InvalidInputError, NumericalError
from .fields import (FieldStrength, FourPotential, Grid3, ScalarField, SourceDensities, VectorField,
                     coulomb_solve, field_norms, leray_project)
from .kernel import KernelTable, f2_energy, kernel_gap, m_kernel, uehling_kernel
from .lattice import (LatticeDiracOperator, build_operator, pv_energy, quadratic_response, spectrum,
                      vacuum_state)
from .pv import MassSpectrum, PVScheme, derive_scheme
from .solver import SaddleConfig, SolveReport, solve_linear_response, solve_self_consistent

__version__ = "0.1.0"

__all__ = [
    "CapacityError", "DegenerateVacuumError", "InvalidInputError", "NumericalError",
    "FieldStrength", "FourPotential", "Grid3", "ScalarField", "SourceDensities", "VectorField",
    "coulomb_solve", "field_norms", "leray_project",
    "KernelTable", "f2_energy", "kernel_gap", "m_kernel", "uehling_kernel",
    "LatticeDiracOperator", "build_operator", "pv_energy", "quadratic_response", "spectrum", "vacuum_state",
    "MassSpectrum", "PVScheme", "derive_scheme",
    "SaddleConfig", "SolveReport", "solve_linear_response", "solve_self_consistent",
]
