import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nelsonlab.errors import CapacityError, CutoffOrderError
from nelsonlab.field import (
    apply_annihilation,
    apply_creation,
    apply_number,
    build_modes,
    custom_modes,
    direction_set,
    enumerate_fock,
    fock_dimension,
    shells_for,
)


def test_quadrature_of_coupling_norm():
    m = build_modes(0.1, 1.0, 32)
    exact = (1.0 - 0.01) / (8 * math.pi**2)
    assert abs(np.sum(m.coupling**2) / exact - 1) < 0.02
    assert np.sum(m.weight * (2 * np.pi) ** -3 / (2 * m.kabs)) == pytest.approx(
        np.sum(m.coupling**2), rel=1e-12)


def test_quadrature_of_number_integral():
    m = build_modes(0.1, 1.0, 32)
    exact = math.log(10) / (4 * math.pi**2)
    assert exact == pytest.approx(0.058325, abs=1e-6)
    assert abs(np.sum(m.coupling**2 / m.omega**2) / exact - 1) < 0.02


@pytest.mark.parametrize("D", [1, 6, 12])
def test_shell_volume_split_over_directions(D):
    m = build_modes(0.2, 1.0, 5, directions=D)
    assert m.K == 5 * D
    assert np.sum(m.weight) == pytest.approx(4 * np.pi * (1 - 0.2**3) / 3, rel=1e-12)
    np.testing.assert_allclose(np.linalg.norm(direction_set(D), axis=1), 1.0)


def test_icosahedron_directions_symmetric():
    d = direction_set(12)
    np.testing.assert_allclose(d.sum(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(d.T @ d, 4 * np.eye(3), atol=1e-12)


def test_thin_shell_vanishing_weight():
    m = build_modes(1.0 - 1e-9, 1.0, 1)
    assert m.K == 1 and np.sum(m.weight) < 1e-7


def test_linear_spacing_and_generalized_profile():
    m = build_modes(0.1, 1.0, 4, spacing="linear", mu=2.0, nu=0.5)
    np.testing.assert_allclose(m.kabs, [0.2125, 0.4375, 0.6625, 0.8875])
    np.testing.assert_allclose(m.omega, m.kabs**2)
    np.testing.assert_allclose(m.amp, (2 * np.pi) ** -1.5 * m.kabs**-0.5)


@pytest.mark.parametrize("kappa", [0.0, -1.0, 1.0, 2.0])
def test_cutoff_order(kappa):
    with pytest.raises(CutoffOrderError):
        build_modes(kappa, 1.0, 4)


def test_shells_per_decade():
    assert shells_for(0.1, 1.0, 12) == 12
    assert shells_for(0.01, 1.0, 12) == 24
    assert shells_for(0.2, 1.0, 12) == 9
    assert shells_for(0.999, 1.0, 12) == 1


def test_mode_table(tmp_path):
    m = custom_modes([1.0, 2.0], [0.1, 0.2])
    m.to_csv(tmp_path / "modes.csv")
    lines = (tmp_path / "modes.csv").read_text().splitlines()
    assert lines[0] == "kx,ky,kz,omega,weight,amp"
    assert len(lines) == 3


def test_fock_small_dimensions():
    assert enumerate_fock(1, 3, 3).dim == 4
    fs = enumerate_fock(2, 2, 2)
    assert [fs.config(i) for i in range(fs.dim)] == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert enumerate_fock(4, 1, 2).dim == 11


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(1, 4))
def test_fock_dimension_formula(K, n_max, N_max):
    fs = enumerate_fock(K, n_max, N_max)
    assert fs.dim == fock_dimension(K, n_max, N_max)
    assert len({fs.config(i) for i in range(fs.dim)}) == fs.dim
    assert all(fs.index(fs.config(i)) == i for i in range(fs.dim))


def test_capacity_error_reports_dimension():
    with pytest.raises(CapacityError) as exc:
        enumerate_fock(30, 6, 6, max_dim=1000)
    assert exc.value.dim == fock_dimension(30, 6, 6)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_ladder_adjointness(K, N_max, seed):
    fs = enumerate_fock(K, N_max, N_max)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(fs.dim) + 1j * rng.standard_normal(fs.dim)
    v = rng.standard_normal(fs.dim) + 1j * rng.standard_normal(fs.dim)
    for j in range(K):
        lhs = np.vdot(apply_creation(j, u, fs), v)
        rhs = np.vdot(u, apply_annihilation(j, v, fs))
        assert abs(lhs - rhs) <= 1e-13 * max(1.0, abs(lhs))


def test_number_operator_and_commutator():
    fs = enumerate_fock(3, 3, 3)
    e = np.zeros(fs.dim)
    e[fs.index((1, 1, 0))] = 1.0
    np.testing.assert_allclose(apply_number(e, fs), 2 * e)
    a = fs.lowering(0).toarray()
    comm = a @ a.T - a.T @ a
    below = fs.totals < fs.N_max
    np.testing.assert_allclose(comm[np.ix_(below, below)], np.eye(below.sum()), atol=1e-14)
    N = sum(fs.lowering(j).T @ fs.lowering(j) for j in range(3)).toarray()
    np.testing.assert_allclose(np.diag(N), fs.totals)
