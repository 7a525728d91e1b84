"""Particle sector: potentials, finite-difference Schrodinger operator, and
matrix elements of position functions in a truncated eigenbasis.

Orbitals are stored as Euclidean unit vectors on the grid nodes, i.e. the
quadrature weight ``h**d`` is absorbed into the vector.  Matrix elements of a
multiplication operator ``f(x)`` are then plain node sums ``u_a^T diag(f) u_b``.

For ``dim == 1`` the particle moves along the z axis of momentum space, so a
single +z boson direction couples to it.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .errors import (
    ClassViolationError,
    ConvergenceError,
    DecayOverflowError,
    InvalidPotentialError,
)

__all__ = [
    "PotentialSpec",
    "GridSpec",
    "AtomicBasis",
    "AtomicOperators",
    "ClassReport",
    "assemble_schrodinger",
    "solve_atomic",
    "validate_class",
    "plane_wave_matrix",
    "plane_wave_matrices",
    "position_moment_matrices",
    "atomic_basis",
]

# exp() overflows a double just above 709.78
_EXP_LIMIT = 700.0


@dataclass(frozen=True)
class PotentialSpec:
    """External potential ``V``.

    kind
        ``"harmonic"`` (``V = omega0**2 |x|^2 / 2``, class C1),
        ``"gaussian_well"`` (``V = -depth exp(-|x|^2 / (2 width**2))``, class C2),
        ``"free"`` (``V = 0``) or ``"tabulated"`` (node values, flattened in
        C order over the grid).
    """

    kind: str
    omega0: float = 1.0
    depth: float = 0.0
    width: float = 1.0
    values: tuple | None = None
    declared_class: str | None = None
    c1: float | None = None
    c2: float | None = None

    def __post_init__(self):
        if self.kind not in ("harmonic", "gaussian_well", "free", "tabulated"):
            raise InvalidPotentialError(f"unknown potential kind {self.kind!r}")
        implied = {"harmonic": "C1", "gaussian_well": "C2"}.get(self.kind)
        if self.declared_class is None and implied is not None:
            object.__setattr__(self, "declared_class", implied)
        elif implied is not None and self.declared_class != implied:
            raise InvalidPotentialError(
                f"{self.kind} potential must be declared {implied}, got {self.declared_class}"
            )
        if self.declared_class not in (None, "C1", "C2"):
            raise InvalidPotentialError(f"unknown class {self.declared_class!r}")
        if self.kind == "harmonic" and not self.omega0 > 0:
            raise InvalidPotentialError("harmonic frequency must be positive")
        if self.kind == "gaussian_well" and not (self.depth > 0 and self.width > 0):
            raise InvalidPotentialError("gaussian_well needs depth > 0 and width > 0")
        if self.kind == "tabulated":
            if self.values is None:
                raise InvalidPotentialError("tabulated potential needs values")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @classmethod
    def harmonic(cls, omega0=1.0):
        return cls("harmonic", omega0=omega0)

    @classmethod
    def gaussian_well(cls, depth, width):
        return cls("gaussian_well", depth=depth, width=width)

    @classmethod
    def from_table(cls, path, declared_class=None, c1=None, c2=None):
        """Read a two-column text table ``node_index value``."""
        data = np.loadtxt(Path(path), ndmin=2)
        if data.shape[1] != 2:
            raise InvalidPotentialError(f"{path}: expected two columns, got {data.shape[1]}")
        idx = data[:, 0].astype(np.int64)
        if not np.array_equal(np.sort(idx), np.arange(len(idx))):
            raise InvalidPotentialError(f"{path}: node indices must cover 0..{len(idx) - 1}")
        values = np.empty(len(idx))
        values[idx] = data[:, 1]
        return cls("tabulated", values=tuple(values), declared_class=declared_class, c1=c1, c2=c2)

    def class_constants(self):
        """``(c1, c2)`` with ``|x|^2 <= c1 V(x) + c2``, or ``(None, None)``."""
        if self.c1 is not None:
            return self.c1, (self.c2 if self.c2 is not None else 0.0)
        if self.kind == "harmonic":
            return 2.0 / self.omega0**2, 0.0
        return None, None

    def evaluate(self, grid: "GridSpec") -> np.ndarray:
        r2 = grid.radii() ** 2
        if self.kind == "harmonic":
            return 0.5 * self.omega0**2 * r2
        if self.kind == "gaussian_well":
            return -self.depth * np.exp(-r2 / (2.0 * self.width**2))
        if self.kind == "free":
            return np.zeros_like(r2)
        values = np.asarray(self.values, dtype=float)
        if values.shape != r2.shape:
            raise InvalidPotentialError(
                f"tabulated potential has {values.size} values, grid has {r2.size} nodes"
            )
        return values

    @classmethod
    def free(cls) -> "PotentialSpec":
        return cls("free")


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on ``[-L, L]^d`` with an odd number of points per axis."""

    dim: int
    half_extent: float
    points: int

    def __post_init__(self):
        if self.dim not in (1, 3):
            raise ValueError(f"grid dimension must be 1 or 3, got {self.dim}")
        if not self.half_extent > 0:
            raise ValueError("grid half-extent must be positive")
        if self.points < 9 or self.points % 2 == 0:
            raise ValueError(f"points per axis must be odd and >= 9, got {self.points}")
        if self.points**self.dim >= np.iinfo(np.int64).max:
            raise ValueError("grid too large for int64 indexing")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / (self.points - 1)

    @property
    def size(self) -> int:
        return self.points**self.dim

    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_extent, self.half_extent, self.points)

    def positions(self) -> np.ndarray:
        """Node coordinates, shape ``(size, dim)``, C order."""
        x = self.axis()
        if self.dim == 1:
            return x[:, None]
        mesh = np.meshgrid(x, x, x, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def positions3(self) -> np.ndarray:
        """Node coordinates embedded in R^3 (1D grids lie on the z axis)."""
        pos = self.positions()
        if self.dim == 3:
            return pos
        out = np.zeros((pos.shape[0], 3))
        out[:, 2] = pos[:, 0]
        return out

    def radii(self) -> np.ndarray:
        return np.sqrt(np.sum(self.positions() ** 2, axis=1))


# fourth-order central difference for the second derivative
_STENCIL = (-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0)


def _laplacian_1d(n, h):
    offsets = range(-2, 3)
    bands = [np.full(n - abs(o), c) for o, c in zip(offsets, _STENCIL)]
    return sp.diags(bands, list(offsets), format="csr") / h**2


def assemble_schrodinger(V: PotentialSpec, g: GridSpec) -> sp.csr_matrix:
    """Central-difference ``-Laplacian/2 + V`` with Dirichlet walls (mass 1, hbar 1).

    The five-point stencil has error O(h^4); nodes beyond the box are zero,
    so the kinetic part stays symmetric positive semidefinite.
    """
    values = V.evaluate(g)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise InvalidPotentialError(
            f"non-finite potential at {bad.size} node(s), first node {int(bad[0])}"
        )
    lap = _laplacian_1d(g.points, g.spacing)
    if g.dim == 3:
        eye = sp.identity(g.points, format="csr")
        lap = (
            sp.kron(sp.kron(lap, eye), eye)
            + sp.kron(sp.kron(eye, lap), eye)
            + sp.kron(sp.kron(eye, eye), lap)
        )
    return (-0.5 * lap + sp.diags(values)).tocsr()


@dataclass(frozen=True, eq=False)
class AtomicBasis:
    """Lowest eigenpairs of the grid Schrodinger operator."""

    grid: GridSpec | None
    energies: np.ndarray
    orbitals: np.ndarray  # (size, M), orthonormal columns
    residuals: np.ndarray
    potential: np.ndarray = field(repr=False)
    digest: str = ""

    @property
    def M(self) -> int:
        return self.energies.size

    @property
    def e_at(self) -> float:
        return float(self.energies[0])


@dataclass(frozen=True, eq=False)
class AtomicOperators:
    """Position functions projected onto an :class:`AtomicBasis`."""

    x2: np.ndarray
    abs_x: np.ndarray
    exp_abs_x: np.ndarray
    x: np.ndarray  # (dim, M, M) coordinate components
    decay_rate: float


@dataclass(frozen=True)
class ClassReport:
    declared_class: str
    c1: float | None
    c2: float | None
    e_at: float
    worst_margin: float
    tail_sup: tuple = ()
    min_ground_component: float | None = None


def _fix_phase(vecs):
    """Make the largest-magnitude component of each column real positive."""
    out = np.array(vecs, copy=True)
    for a in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, a])))
        phase = out[i, a] / abs(out[i, a])
        out[:, a] = out[:, a] / phase
    return out.real if np.isrealobj(vecs) else out


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for arr in arrays:
        a = np.ascontiguousarray(arr)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def solve_atomic(H_at, M: int, tol: float = 1e-8, grid: GridSpec | None = None,
                 potential: np.ndarray | None = None, degeneracy_tol: float = 1e-6,
                 max_iter: int | None = None) -> AtomicBasis:
    """Lowest ``M`` eigenpairs of ``H_at`` (extended to close a split multiplet).

    Uses implicitly restarted Lanczos with an all-ones start vector, so the
    result is reproducible run to run.
    """
    n = H_at.shape[0]
    if M < 1:
        raise ValueError("need at least one atomic level")
    if M + 2 >= n:
        raise ValueError(f"M={M} too large for operator of dimension {n}")
    extra = min(6, n - M - 2)
    k = M + extra
    try:
        w, v = sla.eigsh(H_at, k=k, which="SA", v0=np.ones(n), tol=0, maxiter=max_iter)
    except sla.ArpackNoConvergence as exc:
        res = np.inf
        if exc.eigenvalues.size:
            r = H_at @ exc.eigenvectors - exc.eigenvectors * exc.eigenvalues
            res = float(np.max(np.linalg.norm(r, axis=0)))
        raise ConvergenceError("atomic eigensolve did not converge", residual=res) from exc
    order = np.argsort(w, kind="stable")
    w, v = w[order], v[:, order]
    keep = M
    scale = max(1.0, abs(w[0]))
    while keep < k and w[keep] - w[keep - 1] < degeneracy_tol * scale:
        keep += 1
    if keep == k:
        raise ConvergenceError("degenerate multiplet extends past the computed eigenpairs")
    w, v = w[:keep], _fix_phase(v[:, :keep])
    residuals = np.linalg.norm(H_at @ v - v * w, axis=0)
    worst = float(residuals.max())
    if worst > tol:
        raise ConvergenceError(
            f"atomic residual {worst:.3e} exceeds tolerance {tol:.1e}", residual=worst
        )
    pot = np.asarray(H_at.diagonal()) if potential is None else np.asarray(potential)
    return AtomicBasis(grid, w, v, residuals, pot, _digest(w, v))


def atomic_basis(V: PotentialSpec, g: GridSpec, M: int, tol: float = 1e-8) -> AtomicBasis:
    """Assemble and solve in one go."""
    H = assemble_schrodinger(V, g)
    return solve_atomic(H, M, tol, grid=g, potential=V.evaluate(g))


def validate_class(V: PotentialSpec, basis: AtomicBasis) -> ClassReport:
    """Check the class condition declared by ``V`` on the basis grid."""
    grid = basis.grid
    values = V.evaluate(grid)
    r = grid.radii()
    if V.declared_class == "C1":
        c1, c2 = V.class_constants()
        if c1 is None:
            raise ClassViolationError("C1 potential needs constants c1, c2")
        margin = c1 * values + c2 - r**2
        worst = int(np.argmin(margin))
        # absolute tolerance for round-off in c1*V vs |x|^2
        if margin[worst] < -1e-9 * max(1.0, r[worst] ** 2):
            raise ClassViolationError(
                f"|x|^2 <= {c1} V + {c2} fails at node {worst} (margin {margin[worst]:.3e})",
                worst_node=worst, worst_value=float(margin[worst]),
            )
        return ClassReport("C1", c1, c2, basis.e_at, float(margin[worst]))
    if V.declared_class == "C2":
        if basis.e_at >= 0:
            raise ClassViolationError(
                f"C2 requires E_at < 0, got {basis.e_at:.6g}", worst_node=None,
                worst_value=basis.e_at,
            )
        radii = np.linspace(0.0, grid.half_extent, 9)[1:]
        sups = []
        for R in radii:
            outside = np.abs(values[r > R])
            sups.append(float(outside.max()) if outside.size else 0.0)
        worst = int(np.argmax(np.abs(values) * (r >= radii[-1])))
        if any(b > a + 1e-14 for a, b in zip(sups, sups[1:])) or sups[-1] > 1e-2 * abs(basis.e_at):
            raise ClassViolationError(
                "potential does not decay towards the box boundary", worst_node=worst,
                worst_value=float(values[worst]),
            )
        ground = basis.orbitals[:, 0]
        return ClassReport(
            "C2", None, None, basis.e_at, basis.e_at, tuple(sups), float(ground.min())
        )
    raise ClassViolationError(f"no declared class for potential {V.kind!r}")


def plane_wave_matrices(basis: AtomicBasis, ks) -> np.ndarray:
    """``W[j]_{ab} = <phi_a, exp(-i k_j . x) phi_b>`` for every row of ``ks``."""
    ks = np.atleast_2d(np.asarray(ks, dtype=float))
    pos = basis.grid.positions3()
    U = basis.orbitals
    out = np.empty((ks.shape[0], basis.M, basis.M), dtype=complex)
    for j, k in enumerate(ks):
        if not np.all(np.isfinite(k)):
            raise ValueError("wavevector must be finite")
        if not np.any(k):
            out[j] = np.eye(basis.M)
            continue
        phase = np.exp(-1j * (pos @ k))
        out[j] = U.T @ (phase[:, None] * U)
    return out


def plane_wave_matrix(basis: AtomicBasis, k) -> np.ndarray:
    return plane_wave_matrices(basis, [k])[0]


def position_moment_matrices(basis: AtomicBasis, c: float = 0.0) -> AtomicOperators:
    """Matrices of ``|x|``, ``|x|^2``, ``exp(c|x|)`` and ``x`` in the basis."""
    if c < 0:
        raise ValueError("decay rate must be non-negative")
    pos = basis.grid.positions()
    r = np.sqrt(np.sum(pos**2, axis=1))
    if c * r.max() > _EXP_LIMIT:
        raise DecayOverflowError(
            f"exp({c}*|x|) overflows at the box corner |x|={r.max():.3g}; "
            "use a smaller decay rate or box"
        )
    U = basis.orbitals

    def project(f):
        m = U.T @ (f[:, None] * U)
        return 0.5 * (m + m.T)

    x = np.stack([project(pos[:, i]) for i in range(pos.shape[1])])
    exp_abs = np.eye(basis.M) if c == 0 else project(np.exp(c * r))
    return AtomicOperators(project(r**2), project(r), exp_abs, x, float(c))
