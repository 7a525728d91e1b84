import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nelsonlab.atomic import (
    GridSpec,
    PotentialSpec,
    assemble_schrodinger,
    atomic_basis,
    plane_wave_matrices,
    plane_wave_matrix,
    position_moment_matrices,
    solve_atomic,
    validate_class,
)
from nelsonlab.errors import (
    ClassViolationError,
    ConvergenceError,
    DecayOverflowError,
    InvalidPotentialError,
)


def test_harmonic_1d_ground_energy():
    b = atomic_basis(PotentialSpec.harmonic(), GridSpec(1, 10.0, 201), 3)
    assert abs(b.e_at - 0.5) < 1e-3
    np.testing.assert_allclose(b.energies, [0.5, 1.5, 2.5], atol=5e-3)


def test_harmonic_1d_matches_dense_diagonalization():
    g = GridSpec(1, 10.0, 201)
    H = assemble_schrodinger(PotentialSpec.harmonic(), g)
    dense = np.linalg.eigvalsh(H.toarray())[:3]
    b = atomic_basis(PotentialSpec.harmonic(), g, 3)
    np.testing.assert_allclose(b.energies, dense, atol=1e-9)


def test_harmonic_3d_levels(harmonic3):
    assert abs(harmonic3.e_at - 1.5) < 1e-2
    np.testing.assert_allclose(harmonic3.energies[1:], 2.5, atol=2e-2)
    assert harmonic3.M == 4


def test_degenerate_multiplet_is_completed(harmonic3):
    b = atomic_basis(PotentialSpec.harmonic(), GridSpec(3, 8.0, 41), 2)
    assert b.M == 4
    np.testing.assert_allclose(b.energies, harmonic3.energies, atol=1e-10)


def test_orbitals_orthonormal_and_small_residual(harmonic3):
    U = harmonic3.orbitals
    np.testing.assert_allclose(U.T @ U, np.eye(harmonic3.M), atol=1e-10)
    assert harmonic3.residuals.max() <= 1e-8


def test_free_particle_energy_positive():
    b = atomic_basis(PotentialSpec.free(), GridSpec(1, 5.0, 51), 2)
    assert b.e_at > 0


def test_single_level_basis():
    b = atomic_basis(PotentialSpec.harmonic(), GridSpec(1, 8.0, 81), 1)
    assert b.M == 1
    assert np.linalg.norm(b.orbitals[:, 0]) == pytest.approx(1.0, abs=1e-12)


def test_gaussian_well_is_bound_and_c2():
    V = PotentialSpec.gaussian_well(5.0, 1.0)
    b = atomic_basis(V, GridSpec(3, 6.0, 31), 1)
    assert b.e_at < 0
    rep = validate_class(V, b)
    assert rep.declared_class == "C2"
    assert all(b2 <= b1 for b1, b2 in zip(rep.tail_sup, rep.tail_sup[1:]))
    assert rep.min_ground_component > -1e-10


def test_shallow_gaussian_violates_c2():
    V = PotentialSpec.gaussian_well(0.01, 0.1)
    b = atomic_basis(V, GridSpec(3, 4.0, 21), 1)
    with pytest.raises(ClassViolationError):
        validate_class(V, b)


def test_harmonic_class_constants(harmonic3):
    rep = validate_class(PotentialSpec.harmonic(), harmonic3)
    assert (rep.c1, rep.c2) == (2.0, 0.0)
    assert rep.worst_margin >= -1e-12


def test_c1_violation_names_node():
    g = GridSpec(1, 4.0, 9)
    V = PotentialSpec("tabulated", values=np.full(9, 0.1), declared_class="C1", c1=1.0, c2=0.0)
    b = atomic_basis(V, g, 1)
    with pytest.raises(ClassViolationError) as exc:
        validate_class(V, b)
    assert exc.value.worst_node in (0, 8)


def test_nonfinite_potential_rejected():
    vals = np.zeros(9)
    vals[4] = np.nan
    V = PotentialSpec("tabulated", values=vals)
    with pytest.raises(InvalidPotentialError):
        assemble_schrodinger(V, GridSpec(1, 4.0, 9))


def test_table_round_trip(tmp_path):
    g = GridSpec(1, 4.0, 9)
    vals = 0.5 * g.axis() ** 2
    path = tmp_path / "v.txt"
    np.savetxt(path, np.column_stack([np.arange(9), vals]))
    V = PotentialSpec.from_table(path, "C1", 2.0, 0.0)
    np.testing.assert_allclose(V.evaluate(g), vals)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(2, 1.0, 11)
    with pytest.raises(ValueError):
        GridSpec(1, 1.0, 10)


def test_convergence_error_on_tight_tolerance():
    with pytest.raises(ConvergenceError):
        solve_atomic(assemble_schrodinger(PotentialSpec.harmonic(), GridSpec(1, 8.0, 81)), 2,
                     tol=1e-30)


def test_plane_wave_zero_is_identity(harmonic3):
    np.testing.assert_array_equal(plane_wave_matrix(harmonic3, [0, 0, 0]), np.eye(4))


@settings(max_examples=20, deadline=None)
@given(st.tuples(*[st.floats(-2.0, 2.0)] * 3))
def test_plane_wave_reflection_is_adjoint(harmonic1_small, k):
    W = plane_wave_matrix(harmonic1_small, k)
    Wm = plane_wave_matrix(harmonic1_small, -np.asarray(k))
    assert np.max(np.abs(Wm - W.conj().T)) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 5.0))
def test_plane_wave_rows_are_contractions(harmonic1_small, kz):
    W = plane_wave_matrix(harmonic1_small, [0.0, 0.0, kz])
    assert np.all(np.sum(np.abs(W) ** 2, axis=1) <= 1 + 1e-12)


def test_d1_particle_feels_only_z_component(harmonic1_small):
    W = plane_wave_matrices(harmonic1_small, [[1.0, 2.0, 0.0]])[0]
    np.testing.assert_allclose(W, np.eye(harmonic1_small.M), atol=1e-12)


def test_position_moments_oscillator(harmonic1):
    ops = position_moment_matrices(harmonic1)
    assert abs(ops.x2[0, 0] - 0.5) < 1e-2
    np.testing.assert_array_equal(ops.exp_abs_x, np.eye(harmonic1.M))


def test_exponential_moment_overflow(harmonic1):
    with pytest.raises(DecayOverflowError):
        position_moment_matrices(harmonic1, 100.0)


@pytest.fixture(scope="module")
def harmonic1_small():
    return atomic_basis(PotentialSpec.harmonic(), GridSpec(1, 8.0, 161), 3)
