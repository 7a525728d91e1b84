import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from nelsonlab.errors import ConvergenceError, DiagnosticsError, ShiftTooSmallError
from nelsonlab.spectral import expectation, lanczos_ground, shifted_solve


def _hermitian(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (A + A.conj().T)


def test_pauli_x():
    gs = lanczos_ground(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert gs.energy == pytest.approx(-1.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 120), st.integers(0, 2**31 - 1))
def test_lanczos_matches_dense(n, seed):
    A = _hermitian(n, seed)
    w, v = np.linalg.eigh(A)
    gs = lanczos_ground(sp.csr_matrix(A), tol=1e-10, krylov_dim=24, keep=6)
    assert gs.energy == pytest.approx(w[0], abs=1e-9)
    assert gs.residual <= 1e-10
    if w[1] - w[0] > 1e-3:
        assert abs(abs(np.vdot(v[:, 0], gs.vector)) - 1) < 1e-8


def test_lanczos_recovers_from_invariant_subspace():
    # the all-ones start is an eigenvector of this matrix, but not the lowest one
    A = np.ones((6, 6)) - 3 * np.eye(6)
    gs = lanczos_ground(A)
    assert gs.energy == pytest.approx(-3.0, abs=1e-10)
    assert abs(gs.vector.sum()) < 1e-8


def test_lanczos_deterministic():
    A = sp.csr_matrix(_hermitian(60, 3))
    a, b = lanczos_ground(A, krylov_dim=12), lanczos_ground(A, krylov_dim=12)
    assert a.energy == b.energy
    np.testing.assert_array_equal(a.vector, b.vector)


def test_lanczos_budget():
    with pytest.raises(ConvergenceError) as exc:
        lanczos_ground(sp.diags(np.linspace(0, 1, 400)), tol=1e-14, max_iter=30, krylov_dim=10)
    assert exc.value.history


def test_shifted_solve_diagonal():
    y = shifted_solve(np.diag([0.0, 1.0]), 0.0, 0.5, np.array([1.0, 1.0]))
    np.testing.assert_allclose(y, [2.0, 2.0 / 3.0], atol=1e-11)


def test_shifted_solve_eigenvector():
    A = _hermitian(40, 5)
    gs = lanczos_ground(A, tol=1e-12)
    y = shifted_solve(A, gs.energy, 0.3, gs.vector, tol=1e-12)
    np.testing.assert_allclose(y, gs.vector / 0.3, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 200), st.integers(0, 2**31 - 1), st.floats(0.05, 3.0))
def test_shifted_solve_matches_dense(n, seed, shift):
    A = _hermitian(n, seed)
    E = np.linalg.eigvalsh(A)[0]
    rhs = np.random.default_rng(seed).standard_normal(n) + 0j
    y = shifted_solve(sp.csr_matrix(A), E, shift, rhs, tol=1e-12)
    ref = np.linalg.solve(A - (E - shift) * np.eye(n), rhs)
    assert np.linalg.norm(y - ref) <= 1e-9 * max(1.0, np.linalg.norm(ref))


def test_shift_must_be_positive():
    with pytest.raises(ShiftTooSmallError):
        shifted_solve(np.eye(2), 0.0, 0.0, np.ones(2))
    with pytest.raises(ShiftTooSmallError):
        shifted_solve(np.eye(2), 0.0, 0.1, np.ones(2), min_shift=0.2)


def test_negative_curvature_detected():
    with pytest.raises(ShiftTooSmallError) as exc:
        shifted_solve(np.diag([-1.0, 0.0]), 0.0, 0.5, np.array([1.0, 0.0]))
    assert exc.value.rayleigh_quotient < 0


def test_expectation():
    psi = np.array([1.0, 1.0]) / np.sqrt(2)
    assert expectation(psi, np.eye(2)) == pytest.approx(1.0)
    with pytest.raises(DiagnosticsError):
        expectation(psi, np.array([[0, 1j], [1j, 0]]))
    with pytest.warns(RuntimeWarning):
        expectation(psi, np.array([[0, 1e-8j], [1e-8j, 0]]))
