"""Lowest eigenpair by restarted Lanczos and the shifted resolvent by CG."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, DiagnosticsError, ShiftTooSmallError

__all__ = ["GroundState", "lanczos_ground", "shifted_solve", "expectation"]

# injected vectors after an invariant-subspace breakdown come from this seed
_BREAKDOWN_SEED = 20240611


@dataclass(frozen=True, eq=False)
class GroundState:
    energy: float
    vector: np.ndarray = field(repr=False)
    residual: float
    iterations: int
    tail_weight: float = 0.0
    gap: float = float("nan")
    history: tuple = field(default=(), repr=False)


def _as_operator(H):
    """Return ``(matvec, n, diagonal or None, tail function or None)``."""
    tail = getattr(H, "tail_weight", None)
    if hasattr(H, "matrix"):
        H = H.matrix
    if sp.issparse(H) or isinstance(H, np.ndarray):
        A = H if sp.issparse(H) else np.asarray(H)
        return (lambda v: A @ v), A.shape[0], np.real(A.diagonal()), tail
    return H.matvec, H.shape[0], None, tail


def lanczos_ground(H, tol: float = 1e-10, max_iter: int = 20000, krylov_dim: int = 24,
                   keep: int = 6) -> GroundState:
    """Lowest eigenpair of a Hermitian operator.

    Thick-restart Lanczos with full (twice-iterated Gram-Schmidt)
    reorthogonalization, started from the normalized all-ones vector.  After
    ``krylov_dim`` steps the ``keep`` lowest Ritz vectors are retained and the
    iteration continues until ``||H psi - E psi|| <= tol``.  ``max_iter``
    bounds the number of matrix-vector products.

    ``H`` may be a dense array, a sparse matrix, a LinearOperator or any
    object with a ``matrix`` attribute (and optionally ``tail_weight(psi)``).
    """
    matvec, n, _, tail_fn = _as_operator(H)
    m = min(krylov_dim, n)
    keep = max(1, min(keep, m - 1))
    V = np.zeros((m + 1, n), dtype=complex)  # Krylov vectors stored as rows
    T = np.zeros((m + 1, m + 1), dtype=complex)
    V[0] = 1.0 / np.sqrt(n)
    start = 0
    matvecs = 0
    history = []
    rng = np.random.default_rng(_BREAKDOWN_SEED)
    scale = 0.0
    best = np.inf
    while True:
        size = m
        for j in range(start, m):
            w = matvec(V[j])
            matvecs += 1
            basis = V[: j + 1]
            h = basis.conj() @ w
            w = w - h @ basis
            h2 = basis.conj() @ w
            w = w - h2 @ basis
            h = h + h2
            T[: j + 1, j] = h
            T[j, : j + 1] = h.conj()
            T[j, j] = T[j, j].real
            scale = max(scale, abs(T[j, j]))
            beta = np.linalg.norm(w)
            if beta > 1e-12 * max(scale, 1.0):
                V[j + 1] = w / beta
                T[j + 1, j] = T[j, j + 1] = beta
                continue
            T[j + 1, j] = T[j, j + 1] = 0.0
            if j + 1 >= n:
                size = j + 1
                break
            # invariant subspace: continue from a fresh direction
            fresh = rng.standard_normal(n) + 0j
            for _ in range(2):
                fresh -= (basis.conj() @ fresh) @ basis
            V[j + 1] = fresh / np.linalg.norm(fresh)
        theta, Y = np.linalg.eigh(T[:size, :size])
        beta_last = abs(T[size, size - 1]) if size < n else 0.0
        estimate = beta_last * abs(Y[size - 1, 0])
        history.append(float(estimate))
        if estimate <= 0.5 * tol or size == n:
            psi = Y[:, 0] @ V[:size]
            psi /= np.linalg.norm(psi)
            Hpsi = matvec(psi)
            matvecs += 1
            energy = float(np.real(np.vdot(psi, Hpsi)))
            residual = float(np.linalg.norm(Hpsi - energy * psi))
            best = min(best, residual)
            if residual <= tol:
                gap = float(theta[1] - theta[0]) if size > 1 else float("nan")
                tw = float(tail_fn(psi)) if tail_fn is not None else 0.0
                return GroundState(energy, psi, residual, matvecs, tw, gap, tuple(history))
            if size == n:
                raise ConvergenceError(
                    f"exhausted Krylov space with residual {residual:.3e}", best, history
                )
        else:
            best = min(best, estimate)
        if matvecs >= max_iter:
            raise ConvergenceError(
                f"Lanczos budget of {max_iter} products exhausted (estimate {estimate:.3e})",
                best, history,
            )
        p = min(keep, size - 1)
        V[:p] = Y[:, :p].T @ V[:size]
        V[p] = V[size]
        V[p + 1:] = 0.0
        T[:] = 0.0
        T[np.arange(p), np.arange(p)] = theta[:p]
        T[p, :p] = beta_last * Y[size - 1, :p]
        T[:p, p] = T[p, :p].conj()
        start = p


def shifted_solve(H, E: float, shift: float, rhs: np.ndarray, tol: float = 1e-11,
                  max_iter: int | None = None, min_shift: float | None = None,
                  x0: np.ndarray | None = None) -> np.ndarray:
    """Solve ``(H - E + shift) y = rhs`` by Jacobi-preconditioned CG.

    ``E`` should be the ground energy of ``H`` so that the shifted operator is
    positive definite.  A direction with non-positive curvature raises
    :class:`ShiftTooSmallError`.
    """
    if not shift > 0:
        raise ShiftTooSmallError(f"shift must be positive, got {shift}", float(shift))
    if min_shift is not None and shift < min_shift:
        raise ShiftTooSmallError(
            f"shift {shift:.4g} below the required margin {min_shift:.4g}", float(shift)
        )
    matvec, n, diag, _ = _as_operator(H)
    rhs = np.asarray(rhs)
    rnorm0 = np.linalg.norm(rhs)
    dtype = np.result_type(rhs.dtype, complex)
    if rnorm0 == 0:
        return np.zeros(n, dtype=dtype)
    max_iter = max_iter or 10 * n + 100
    sigma = shift - E

    def A(v):
        return matvec(v) + sigma * v

    if diag is not None:
        d = diag + sigma
        inv_d = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
    else:
        inv_d = np.ones(n)
    y = np.zeros(n, dtype=dtype) if x0 is None else np.array(x0, dtype=dtype)
    r = rhs - A(y) if x0 is not None else rhs.astype(dtype)
    z = inv_d * r
    p = z.copy()
    rz = np.vdot(r, z).real
    target = tol * rnorm0
    for it in range(max_iter):
        Ap = A(p)
        curv = np.vdot(p, Ap).real
        pp = np.vdot(p, p).real
        if curv <= 0:
            raise ShiftTooSmallError(
                f"negative curvature: Rayleigh quotient {curv / pp:.3e} of the shifted operator",
                curv / pp,
            )
        alpha = rz / curv
        y += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= target:
            true_r = rhs - A(y)
            if np.linalg.norm(true_r) <= target:
                return y
            r = true_r
        z = inv_d * r
        rz_new = np.vdot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = float(np.linalg.norm(rhs - A(y)) / rnorm0)
    raise ConvergenceError(f"CG did not reach {tol:.1e} in {max_iter} steps", res)


def expectation(psi: np.ndarray, apply, warn_tol: float = 1e-10,
                error_tol: float = 1e-6) -> float:
    """Real part of ``<psi, A psi>`` for a Hermitian ``A`` given as a callable or matrix."""
    Apsi = apply(psi) if callable(apply) else apply @ psi
    val = np.vdot(psi, Apsi)
    imag = abs(val.imag)
    if imag > error_tol * max(1.0, abs(val.real)):
        raise DiagnosticsError(f"expectation has imaginary part {imag:.3e}")
    if imag > warn_tol:
        warnings.warn(f"expectation has imaginary part {imag:.3e}", RuntimeWarning, stacklevel=2)
    return float(val.real)
