"""Coupled particle-field Hamiltonian on (atomic levels) x (truncated Fock space).

State vectors are indexed ``a * fock.dim + n`` (atomic index major), so a
vector reshaped to ``(M, fock.dim)`` has one row per atomic level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .atomic import AtomicBasis, GridSpec, PotentialSpec, atomic_basis, plane_wave_matrices
from .errors import CapacityError, ProvenanceError
from .field import FockSpace, ModeSet, build_modes, enumerate_fock, shells_for

__all__ = [
    "ModelConfig",
    "NelsonMatrix",
    "VanHoveSolution",
    "assemble_hamiltonian",
    "nelson_matrix",
    "assemble_van_hove",
    "van_hove_closed_form",
    "self_energy_bracket",
    "build_components",
]

DEFAULT_MAX_DIM = 3_000_000


@dataclass(frozen=True)
class ModelConfig:
    """Physical and truncation parameters of one coupled model.

    Units: momenta and energies in natural units (hbar = mass = 1).
    ``shells=None`` derives the shell count from ``shells_per_decade``.
    ``n_max=None`` means the per-mode cap equals ``N_max``.
    """

    q: float
    potential: PotentialSpec
    grid: GridSpec
    levels: int = 4
    kappa: float = 0.1
    cutoff: float = 1.0
    shells: int | None = None
    shells_per_decade: int = 12
    directions: int = 1
    spacing: str = "log"
    mu: float = 1.0
    nu: float | None = None
    n_max: int | None = None
    N_max: int = 5
    atomic_tol: float = 1e-8
    eig_tol: float = 1e-10
    lin_tol: float = 1e-11

    def __post_init__(self):
        for name in ("q", "kappa", "cutoff", "mu", "atomic_tol", "eig_tol", "lin_tol"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.n_max is not None and self.n_max < 1:
            raise ValueError("n_max must be >= 1")

    @property
    def shell_count(self) -> int:
        if self.shells is not None:
            return self.shells
        return shells_for(self.kappa, self.cutoff, self.shells_per_decade)

    @property
    def mode_cap(self) -> int:
        return self.N_max if self.n_max is None else self.n_max

    def with_kappa(self, kappa: float) -> "ModelConfig":
        return replace(self, kappa=kappa)


@dataclass(frozen=True, eq=False)
class NelsonMatrix:
    matrix: sp.csr_matrix = field(repr=False)
    levels: int
    energies: np.ndarray
    plane_waves: np.ndarray = field(repr=False)
    modes: ModeSet = field(repr=False)
    fock: FockSpace = field(repr=False)
    q: float
    basis_digest: str = ""
    modes_digest: str = ""
    fock_digest: str = ""

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, v):
        return self.matrix @ v

    def split(self, psi: np.ndarray) -> np.ndarray:
        return np.asarray(psi).reshape(self.levels, self.fock.dim)

    def lower(self, j: int, psi: np.ndarray) -> np.ndarray:
        """``(I x a_j) psi``."""
        a = self.fock.lowering(j)
        return (a @ self.split(psi).T).T.ravel()

    def raise_(self, j: int, psi: np.ndarray) -> np.ndarray:
        a = self.fock.lowering(j)
        return (a.T @ self.split(psi).T).T.ravel()

    def number(self, psi: np.ndarray) -> np.ndarray:
        """``(I x N) psi``."""
        return (self.split(psi) * self.fock.totals).ravel()

    def atomic(self, A: np.ndarray, psi: np.ndarray) -> np.ndarray:
        """``(A x I) psi`` for an ``M x M`` matrix ``A``."""
        return (A @ self.split(psi)).ravel()

    def reduced_density(self, psi: np.ndarray) -> np.ndarray:
        """Atomic density matrix ``rho`` with ``<A x I> = tr(A rho)``."""
        Psi = self.split(psi)
        return Psi @ Psi.conj().T

    def tail_weight(self, psi: np.ndarray) -> float:
        """Probability on configurations with total boson number ``N_max``."""
        Psi = self.split(psi)
        cap = self.fock.totals == self.fock.N_max
        return float(np.sum(np.abs(Psi[:, cap]) ** 2))

    def hermiticity_defect(self) -> float:
        d = self.matrix - self.matrix.conj().T
        return float(abs(d).max()) if d.nnz else 0.0

    def to_coordinate_text(self, path):
        """Write ``row col re im`` lines, one per stored entry."""
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {v.real!r} {v.imag!r}\n")


def nelson_matrix(energies, plane_waves, modes: ModeSet, fock: FockSpace, q: float,
                  basis_digest: str = "", max_dim: int = DEFAULT_MAX_DIM) -> NelsonMatrix:
    """``diag(E) x I + I x diag(sum n w) + q sum_j g_j (W_j^H x a_j + W_j x a_j^+)``."""
    energies = np.asarray(energies, dtype=float)
    M = energies.size
    if fock.K != modes.K:
        raise ProvenanceError(f"Fock space has {fock.K} modes, mode set has {modes.K}")
    if plane_waves.shape != (modes.K, M, M):
        raise ProvenanceError(
            f"plane-wave table shape {plane_waves.shape} does not match ({modes.K}, {M}, {M})"
        )
    dim = M * fock.dim
    if dim > max_dim:
        raise CapacityError(f"coupled dimension {dim} exceeds budget {max_dim}", dim)
    free = fock.configs.astype(float) @ modes.omega
    H = sp.kron(sp.diags(energies), sp.identity(fock.dim)) + sp.kron(
        sp.identity(M), sp.diags(free)
    )
    H = H.astype(complex).tocsr()
    if q != 0:
        g = modes.coupling
        for j in range(modes.K):
            a = fock.lowering(j)
            W = sp.csr_matrix(plane_waves[j])
            H = H + (q * g[j]) * (sp.kron(W.conj().T, a) + sp.kron(W, a.T))
    H = sp.csr_matrix(H)
    H.sum_duplicates()
    H.eliminate_zeros()
    return NelsonMatrix(H, M, energies, plane_waves, modes, fock, float(q), basis_digest,
                        modes.digest, fock.digest)


def assemble_hamiltonian(cfg: ModelConfig, basis: AtomicBasis, modes: ModeSet,
                         fock: FockSpace, plane_waves=None,
                         max_dim: int = DEFAULT_MAX_DIM) -> NelsonMatrix:
    """Coupled Hamiltonian for ``cfg`` after checking that the pieces belong to it."""
    if basis.grid is not None and basis.grid != cfg.grid:
        raise ProvenanceError("atomic basis was built on a different grid")
    expected = (cfg.kappa, cfg.cutoff, cfg.shell_count, cfg.directions, cfg.spacing,
                cfg.mu, cfg.nu)
    actual = (modes.kappa, modes.cutoff, modes.shells, modes.directions, modes.spacing,
              modes.mu, modes.nu)
    if expected != actual:
        raise ProvenanceError(f"mode set {actual} does not match config {expected}")
    if (fock.n_max, fock.N_max) != (cfg.mode_cap, cfg.N_max):
        raise ProvenanceError("Fock caps do not match config")
    if plane_waves is None:
        plane_waves = plane_wave_matrices(basis, modes.k)
    return nelson_matrix(basis.energies, plane_waves, modes, fock, cfg.q, basis.digest, max_dim)


def build_components(cfg: ModelConfig, basis: AtomicBasis | None = None):
    """Atomic basis, modes and Fock space for ``cfg``."""
    if basis is None:
        basis = atomic_basis(cfg.potential, cfg.grid, cfg.levels, cfg.atomic_tol)
    modes = build_modes(cfg.kappa, cfg.cutoff, cfg.shell_count, cfg.directions, cfg.spacing,
                        cfg.mu, cfg.nu)
    fock = enumerate_fock(modes.K, cfg.mode_cap, cfg.N_max)
    return basis, modes, fock


def assemble_van_hove(modes: ModeSet, E_at: float, q: float, fock: FockSpace) -> NelsonMatrix:
    """Frozen-particle model: one atomic level and every plane wave replaced by 1."""
    ones = np.ones((modes.K, 1, 1), dtype=complex)
    return nelson_matrix([E_at], ones, modes, fock, q, "van-hove")


@dataclass(frozen=True)
class VanHoveSolution:
    energy: float
    number: float
    displacements: np.ndarray = field(repr=False)


def van_hove_closed_form(modes: ModeSet, E_at: float, q: float) -> VanHoveSolution:
    """Coherent ground state of the displaced-oscillator model."""
    g, w = modes.coupling, modes.omega
    alpha = -q * g / w
    return VanHoveSolution(
        float(E_at - q**2 * np.sum(g**2 / w)), float(q**2 * np.sum(g**2 / w**2)), alpha
    )


def self_energy_bracket(modes: ModeSet, E_at: float, q: float) -> tuple[float, float]:
    """``(E_at - q^2 ||lambda||^2, E_at)`` with the discrete norm ``sum g_j^2``."""
    return float(E_at - q**2 * np.sum(modes.coupling**2)), float(E_at)
