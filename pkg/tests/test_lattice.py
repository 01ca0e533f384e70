import numpy as np
import pytest

from dirac_vacuum.verification import random_potential
from dirac_vacuum.errors import CapacityError, DegenerateVacuumError, InvalidInputError
from dirac_vacuum.fields import FourPotential, Grid3, ScalarField, VectorField
from dirac_vacuum.lattice import (_dft_spinor, analytic_hessian, build_operator, charge_conjugation_check, density_pairing,
                                  dirac_matrices, fd_hessian, free_dispersion, free_spectrum, gauge_function_ok,
                                  gauge_phase, link_integrals, oracle_link_integrals, oracle_pv_energy,
                                  pv_energy, quadratic_response, random_gauge_function, remainder_scaling,
                                  spectrum, vacuum_state)


def _anticomm(a, b):
    return a @ b + b @ a


def test_dirac_algebra():
    d = dirac_matrices()
    mats = list(d.alpha) + [d.beta, d.gamma_w]
    for i, a in enumerate(mats):
        assert np.allclose(a, a.conj().T)
        for j, b in enumerate(mats):
            expected = 2 * np.eye(4) if i == j else np.zeros((4, 4))
            assert np.allclose(_anticomm(a, b), expected)


def test_free_operator_matches_dispersion(scheme123):
    g = Grid3(4, 3.0)
    op = build_operator(g, 1.0, FourPotential.zeros(g), 1.0)
    vals = spectrum(op).eigenvalues
    assert np.max(np.abs(vals - free_spectrum(g, 1.0))) <= 1e-12
    assert op.hermiticity_defect() == 0.0


def test_zero_momentum_block_is_mass_term():
    g = Grid3(2, 1.0)
    op = build_operator(g, 1.7, FourPotential.zeros(g), 0.5)
    blocks = {int(s[0]): b for s, b in op.blocks() if s.size == 1}
    assert np.allclose(blocks[0], 1.7 * dirac_matrices().beta)
    assert free_dispersion(g, 1.7)[0, 0, 0] == pytest.approx(1.7)


def test_block_and_position_forms_agree(rng):
    g = Grid3(4, 3.0)
    pot = random_potential(g, rng)
    op = build_operator(g, 1.0, pot, 0.8)
    f = _dft_spinor(g)
    rotated = f @ op.matrix @ f.conj().T
    assert np.max(np.abs(rotated - op.momentum_matrix())) <= 1e-12
    assert op.hermiticity_defect() <= 1e-15


def test_gauge_covariance_matrix(rng):
    g = Grid3(4, 3.0)
    pot = random_potential(g, rng)
    chi = random_gauge_function(g, rng)
    assert gauge_function_ok(chi)
    e = 0.9
    d0 = build_operator(g, 1.0, pot, e).matrix
    d1 = build_operator(g, 1.0, pot.gauge_shift(chi), e).matrix
    u = gauge_phase(chi, e)
    assert np.max(np.abs(d1 - u[:, None] * d0 * u.conj()[None, :])) <= 1e-12


def test_link_integral_matches_quadrature(rng):
    g = Grid3(6, 4.0)
    a = VectorField(g, rng.standard_normal((3,) + g.shape))
    assert np.max(np.abs(link_integrals(a) - oracle_link_integrals(a))) <= 1e-12


def test_energy_even_and_gauge_invariant(scheme123, rng):
    g = Grid3(4, 3.0)
    pot = random_potential(g, rng)
    f = pv_energy(scheme123, g, pot, 1.0)
    assert abs(f - pv_energy(scheme123, g, -pot, 1.0)) <= 1e-10
    fg = pv_energy(scheme123, g, pot.gauge_shift(random_gauge_function(g, rng)), 1.0)
    assert abs(f - fg) <= 1e-10
    assert abs(pv_energy(scheme123, g, FourPotential.zeros(g), 1.0)) <= 1e-12
    assert abs(f - oracle_pv_energy(scheme123, g, pot, 1.0)) <= 1e-10


def test_charge_conjugation(rng):
    g = Grid3(3, 2.0)
    op = build_operator(g, 1.0, random_potential(g, rng), 1.0)
    rep = charge_conjugation_check(op)
    assert rep.passed and rep.matrix_defect <= 1e-14


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0])
def test_magnetic_gap(rng, m):
    g = Grid3(4, 3.0)
    pot = random_potential(g, rng, norm=3.0, electric=False)
    assert spectrum(build_operator(g, m, pot, 1.0)).gap >= m * (1 - 1e-12)


def test_densities_vanish_without_field(scheme123):
    g = Grid3(4, 3.0)
    st = vacuum_state(scheme123, g, FourPotential.zeros(g), 1.0)
    assert np.max(np.abs(st.rho.values)) <= 1e-12
    assert np.max(np.abs(st.current.values)) <= 1e-12
    assert st.energy == pytest.approx(0.0, abs=1e-12)


def test_density_charge_conjugation_symmetry(scheme123, rng):
    g = Grid3(4, 3.0)
    pot = random_potential(g, rng)
    a = vacuum_state(scheme123, g, pot, 1.0)
    b = vacuum_state(scheme123, g, -pot, 1.0)
    assert np.allclose(a.rho.values, -b.rho.values, atol=1e-12)
    assert np.allclose(a.current.values, -b.current.values, atol=1e-12)
    assert abs(a.rho.values.sum()) <= 1e-10


def test_densities_are_energy_derivatives(scheme123, rng):
    g = Grid3(4, 3.0)
    pot = random_potential(g, rng, norm=0.5)
    delta = random_potential(g, rng)
    e = 1.0
    st = vacuum_state(scheme123, g, pot, e)
    f = lambda t: pv_energy(scheme123, g, pot + delta * t, e)
    t = 0.1
    c1 = (f(t) - f(-t)) / (2 * t)
    c2 = (f(t / 2) - f(-t / 2)) / t
    d1 = (4 * c2 - c1) / 3
    pred = density_pairing(st, delta)
    assert pred == pytest.approx(d1, rel=1e-6)


def test_analytic_hessian_matches_differences(scheme123, rng):
    g = Grid3(4, 3.0)
    d = random_potential(g, rng)
    fd = fd_hessian(lambda t: pv_energy(scheme123, g, d * t, 1.0), 0.2)[0]
    assert analytic_hessian(scheme123, g, d, 1.0) == pytest.approx(fd, rel=1e-6)


def test_projector_is_hermitian(scheme123, rng):
    g = Grid3(3, 2.0)
    st = vacuum_state(scheme123, g, random_potential(g, rng), 1.0, keep_projector=True)
    assert st.hermiticity_defect() <= 1e-14


def test_capacity_error(rng):
    g = Grid3(4, 3.0)
    with pytest.raises(CapacityError):
        build_operator(g, 1.0, random_potential(g, rng), 1.0, capacity=64)
    op = build_operator(g, 1.0, FourPotential.zeros(g), 1.0, capacity=64)
    with pytest.raises(CapacityError):
        op.matrix


def test_degenerate_vacuum_detected(scheme123):
    g = Grid3(2, 1.0)
    v = np.zeros(g.shape)
    v[0, 0, 0], v[1, 1, 1] = 50.0, -50.0
    pot = FourPotential.from_arrays(g, v)
    with pytest.raises(DegenerateVacuumError) as info:
        vacuum_state(scheme123, g, pot, 1.0, gap_tol=10.0)
    assert info.value.mass in (1.0, 2.0, 3.0)


def test_invalid_mass():
    g = Grid3(2, 1.0)
    with pytest.raises(InvalidInputError):
        build_operator(g, 0.0, FourPotential.zeros(g), 1.0)


def test_spectrum_csv_and_residuals(tmp_path, rng):
    g = Grid3(3, 1.0)
    op = build_operator(g, 1.0, random_potential(g, rng), 1.0)
    sd = spectrum(op, vectors=True)
    assert np.max(sd.residuals(op.matrix)) <= 1e-12
    p = sd.to_csv(tmp_path / "eigenvalues.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "index,eigenvalue" and len(lines) == 4 * 27 + 1


def test_alpha_product_identity(rng):
    d = dirac_matrices()
    sigma = np.array(d.sigma)
    for _ in range(5):
        x, y = rng.standard_normal(3), rng.standard_normal(3)
        lhs = d.alpha_dot(x) @ d.alpha_dot(y)
        rhs = (x @ y) * np.eye(4) + 1j * np.tensordot(np.cross(x, y), sigma, axes=1)
        assert np.allclose(lhs, rhs, atol=1e-14)
    x = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(d.alpha_dot(x) @ d.alpha_dot(x), 14 * np.eye(4))
    assert np.trace(d.beta) == 0 and all(np.trace(a) == 0 for a in d.alpha)


def test_quadratic_response_small_lattice(scheme123, rng):
    g = Grid3(4, 3.0)
    q = quadratic_response(scheme123, g, random_potential(g, rng), 1.0)
    assert q.fd_vs_oracle <= 1e-6
    assert abs(q.first_derivative) <= 1e-9
    assert q.analytic_hessian == pytest.approx(q.fd_hessian, rel=1e-6)


def test_remainder_is_even_and_quartic(scheme123, rng):
    g = Grid3(4, 3.0)
    rep = remainder_scaling(scheme123, g, random_potential(g, rng), 1.0, eps0=1.0)
    assert rep.evenness_defect <= 1e-6
    assert 3.7 <= rep.exponent <= 4.3
    assert abs(pv_energy(scheme123, g, FourPotential.zeros(g), 1.0)) <= 1e-12
