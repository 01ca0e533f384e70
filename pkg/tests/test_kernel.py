import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from dirac_vacuum.errors import InvalidInputError
from dirac_vacuum.fields import FieldStrength, FourPotential, Grid3, VectorField
from dirac_vacuum.kernel import (KernelTable, f2_energy, kernel_gap, m_kernel, m_zero, screened_part,
                                 uehling_kernel)
from dirac_vacuum.pv import derive_scheme


def reference_m(scheme, k):
    f = lambda u: u * (1 - u) * sum(c * np.log(m * m + u * (1 - u) * k * k) for c, m in scheme.terms())
    return -2 / np.pi * quad(f, 0, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def test_m_at_zero(scheme123):
    assert m_kernel(scheme123, 0.0) == pytest.approx(0.095465, abs=5e-7)
    assert abs(m_kernel(scheme123, 0.0) - 2 * scheme123.log_lambda / (3 * np.pi)) <= 1e-8


@pytest.mark.parametrize("k", [0.1, 1.0, 3.7, 10.0, 250.0])
def test_m_matches_scipy_reference(scheme123, k):
    assert m_kernel(scheme123, k) == pytest.approx(reference_m(scheme123, k), abs=1e-11)


def test_m_decays(scheme123):
    assert 0 < m_kernel(scheme123, 1e6) < 1e-3


def test_m_array_shape(scheme123):
    out = m_kernel(scheme123, np.zeros((2, 3)))
    assert out.shape == (2, 3)


def test_negative_k_rejected(scheme123):
    with pytest.raises(InvalidInputError):
        m_kernel(scheme123, -1.0)
    with pytest.raises(InvalidInputError):
        uehling_kernel(-0.5)


def test_two_forms_agree(scheme123):
    k = np.linspace(0, 20, 11)
    assert np.allclose(m_kernel(scheme123, k) + screened_part(scheme123, k), m_zero(scheme123), atol=1e-12)


def test_quadrature_tolerance_independence(scheme123):
    val, err = m_kernel(scheme123, 4.2, tol=1e-8, return_error=True)
    tight = m_kernel(scheme123, 4.2, tol=5e-9)
    assert abs(val - tight) <= max(err, 1e-15)


def test_uehling_limits():
    assert uehling_kernel(0.0) == 0.0
    assert uehling_kernel(1e-3) / 1e-6 == pytest.approx(1 / (15 * np.pi), rel=1e-5)
    u = uehling_kernel(np.linspace(0, 10, 101))
    assert np.all(np.diff(u) > 0)


def test_uehling_uses_mass_ratio():
    assert uehling_kernel(4.0, m=2.0) == pytest.approx(uehling_kernel(2.0, m=1.0), rel=1e-14)


def test_uehling_reference():
    q = 3.0
    ref = q * q / (4 * np.pi) * quad(lambda z: (z * z - z ** 4 / 3) / (1 + q * q * (1 - z * z) / 4), 0, 1,
                                     epsabs=1e-15)[0]
    assert uehling_kernel(q) == pytest.approx(ref, abs=1e-13)


def test_gap_behaviour():
    assert kernel_gap(derive_scheme((1, 2, 3)), 0.0) == 0.0
    big = derive_scheme((1.0, 1e4, 2e4))
    assert np.max(np.abs(kernel_gap(big, np.linspace(0, 10, 41)))) <= 1e-5
    gaps = [abs(kernel_gap(derive_scheme((1.0, 10.0 ** s, 2 * 10.0 ** s)), 5.0)) for s in (2, 3, 4)]
    assert gaps[0] > gaps[1] > gaps[2]


schemes = st.tuples(st.floats(0.1, 5), st.floats(1.01, 10), st.floats(1.01, 10)).map(
    lambda t: derive_scheme((t[0], t[0] * t[1], t[0] * t[1] * t[2])))


@given(schemes, st.floats(0, 1e3))
@settings(max_examples=60, deadline=None)
def test_m_bound(s, k):
    m0 = m_kernel(s, 0.0)
    assert abs(m0 - 2 * s.log_lambda / (3 * np.pi)) <= 1e-8
    mk = m_kernel(s, k)
    assert 0 < mk <= m0 + 1e-15


def _single_mode(grid, kind):
    x = grid.coordinates
    k0 = 2 * np.pi / grid.box_length
    if kind == "B":
        a = np.zeros((3,) + grid.shape)
        a[1] = np.cos(k0 * x[0])
        return FourPotential.from_arrays(grid, a=a).fields()
    return FourPotential.from_arrays(grid, v=np.cos(k0 * x[0])).fields()


def test_f2_signs_and_scaling(scheme123):
    grid = Grid3(8, 5.0)
    zero = FieldStrength(VectorField.zeros(grid), VectorField.zeros(grid))
    assert f2_energy(zero, scheme123) == 0.0
    fb = _single_mode(grid, "B")
    fe = _single_mode(grid, "E")
    assert f2_energy(fb, scheme123) > 0
    assert f2_energy(fe, scheme123) < 0
    doubled = FieldStrength(fb.e * 2, fb.b * 2)
    assert f2_energy(doubled, scheme123) == pytest.approx(4 * f2_energy(fb, scheme123), rel=1e-13)


def test_f2_single_mode_closed_form(scheme123):
    grid = Grid3(8, 5.0)
    k0 = 2 * np.pi / 5.0
    expected = m_kernel(scheme123, k0) * k0 ** 2 * grid.volume / 2 / (8 * np.pi)
    assert f2_energy(_single_mode(grid, "B"), scheme123) == pytest.approx(expected, rel=1e-12)


def test_f2_sign_split_random(scheme123, rng):
    grid = Grid3(6, 4.0)
    pot = FourPotential.from_arrays(grid, rng.standard_normal(grid.shape), rng.standard_normal((3,) + grid.shape))
    fs = pot.fields()
    only_e = FieldStrength(fs.e, VectorField.zeros(grid))
    only_b = FieldStrength(VectorField.zeros(grid), fs.b)
    assert f2_energy(only_e, scheme123) < 0 < f2_energy(only_b, scheme123)


def test_kernel_table_csv(tmp_path, scheme123):
    table = KernelTable.build(scheme123, np.linspace(0, 10, 16))
    assert table.check_invariants() == []
    path = table.to_csv(tmp_path / "k.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "k,M,U,gap"
    assert len(lines) == 17
    meta = json.loads(path.with_suffix(".json").read_text())
    assert meta["scheme"]["c1"] == pytest.approx(-1.6)


def test_kernel_table_validation(scheme123):
    with pytest.raises(InvalidInputError):
        KernelTable(np.array([0.0, 2.0, 1.0]), np.ones(3), scheme123)
