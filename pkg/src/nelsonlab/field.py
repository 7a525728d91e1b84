"""Boson sector: quadrature modes on the momentum shell and the truncated
Fock space with its ladder operators."""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, CutoffOrderError

__all__ = [
    "ModeSet",
    "FockSpace",
    "build_modes",
    "custom_modes",
    "shells_for",
    "direction_set",
    "enumerate_fock",
    "fock_dimension",
    "apply_annihilation",
    "apply_creation",
    "apply_number",
]

DEFAULT_MAX_DIM = 2_000_000

_PHI = (1.0 + math.sqrt(5.0)) / 2.0


def direction_set(D: int) -> np.ndarray:
    """Unit vectors: 1 = +z, 6 = +-axes, 12 = icosahedron vertices."""
    if D == 1:
        return np.array([[0.0, 0.0, 1.0]])
    if D == 6:
        e = np.eye(3)
        return np.concatenate([e, -e])
    if D == 12:
        pts = []
        for s1 in (1.0, -1.0):
            for s2 in (_PHI, -_PHI):
                pts += [(0.0, s1, s2), (s1, s2, 0.0), (s2, 0.0, s1)]
        pts = np.array(pts)
        return pts / np.linalg.norm(pts, axis=1, keepdims=True)
    raise ValueError(f"directions per shell must be 1, 6 or 12, got {D}")


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Discrete boson modes.

    ``coupling`` is ``amp * sqrt(weight)``, the discrete stand-in for
    ``lambda_{kappa,0}(k_j)`` integrated over the cell of mode ``j``.
    """

    kappa: float
    cutoff: float
    k: np.ndarray
    omega: np.ndarray
    weight: np.ndarray
    amp: np.ndarray
    mu: float = 1.0
    nu: float | None = None
    shells: int = 0
    directions: int = 0
    spacing: str = "custom"
    digest: str = field(default="", compare=False)

    @property
    def K(self) -> int:
        return self.omega.size

    @property
    def coupling(self) -> np.ndarray:
        return self.amp * np.sqrt(self.weight)

    @property
    def kabs(self) -> np.ndarray:
        return np.linalg.norm(self.k, axis=1)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kx", "ky", "kz", "omega", "weight", "amp"])
            for kv, om, wt, am in zip(self.k, self.omega, self.weight, self.amp):
                w.writerow([repr(float(v)) for v in (*kv, om, wt, am)])


def _mode_digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()[:16]


def shells_for(kappa: float, cutoff: float, per_decade: int) -> int:
    """Shell count giving ``per_decade`` shells per decade of ``cutoff/kappa``."""
    return max(1, math.ceil(per_decade * math.log10(cutoff / kappa) - 1e-9))


def build_modes(kappa: float, cutoff: float, shells: int, directions: int = 1,
                spacing: str = "log", mu: float = 1.0, nu: float | None = None) -> ModeSet:
    """Split the shell ``kappa <= |k| <= cutoff`` into ``shells * directions`` cells.

    With ``nu=None`` the Nelson profile ``(2 pi)^{-3/2} / sqrt(2 |k|^mu)`` is
    used, otherwise ``(2 pi)^{-3/2} |k|^{-nu}``.
    """
    if not kappa > 0:
        raise CutoffOrderError(f"infrared cutoff must be positive, got {kappa}")
    if not kappa < cutoff:
        raise CutoffOrderError(f"need kappa < cutoff, got kappa={kappa}, cutoff={cutoff}")
    if shells < 1:
        raise ValueError("need at least one shell")
    if spacing == "log":
        edges = kappa * (cutoff / kappa) ** (np.arange(shells + 1) / shells)
        mid = np.sqrt(edges[:-1] * edges[1:])
    elif spacing == "linear":
        edges = np.linspace(kappa, cutoff, shells + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
    else:
        raise ValueError(f"spacing must be 'log' or 'linear', got {spacing!r}")
    edges[0], edges[-1] = kappa, cutoff
    dirs = direction_set(directions)
    vol = 4.0 * np.pi * (edges[1:] ** 3 - edges[:-1] ** 3) / 3.0
    r = np.repeat(mid, directions)
    k = (mid[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    weight = np.repeat(vol / directions, directions)
    omega = r**mu
    pref = (2.0 * np.pi) ** -1.5
    amp = pref / np.sqrt(2.0 * omega) if nu is None else pref * r ** (-nu)
    digest = _mode_digest(k, omega, weight, amp, [kappa, cutoff])
    return ModeSet(kappa, cutoff, k, omega, weight, amp, mu, nu, shells, directions,
                   spacing, digest)


def custom_modes(omega, coupling, k=None) -> ModeSet:
    """Modes given directly by frequency and coupling (unit weights)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    coupling = np.atleast_1d(np.asarray(coupling, dtype=float))
    if np.any(omega <= 0):
        raise ValueError("mode frequencies must be positive")
    if k is None:
        k = np.zeros((omega.size, 3))
        k[:, 2] = omega
    k = np.asarray(k, dtype=float).reshape(-1, 3)
    kabs = np.linalg.norm(k, axis=1)
    weight = np.ones_like(omega)
    digest = _mode_digest(k, omega, weight, coupling)
    return ModeSet(float(kabs.min()), float(kabs.max()), k, omega, weight, coupling,
                   digest=digest)


@lru_cache(maxsize=None)
def _compositions(parts: int, total: int, cap: int) -> np.ndarray:
    """All ``parts``-tuples summing to ``total`` with entries <= cap, descending lex."""
    if parts == 1:
        if total <= cap:
            return np.array([[total]], dtype=np.int16)
        return np.empty((0, 1), dtype=np.int16)
    blocks = []
    for first in range(min(cap, total), -1, -1):
        rest = _compositions(parts - 1, total - first, cap)
        if rest.shape[0]:
            head = np.full((rest.shape[0], 1), first, dtype=np.int16)
            blocks.append(np.hstack([head, rest]))
    if not blocks:
        return np.empty((0, parts), dtype=np.int16)
    return np.vstack(blocks)


def fock_dimension(K: int, n_max: int, N_max: int) -> int:
    """Number of occupation tuples, via coefficients of ``(1 + z + ... + z^n_max)^K``."""
    poly = np.zeros(N_max + 1, dtype=object)
    poly[0] = 1
    for _ in range(K):
        new = np.zeros_like(poly)
        for n in range(min(n_max, N_max) + 1):
            new[n:] = new[n:] + poly[: N_max + 1 - n]
        poly = new
    return int(sum(poly))


@dataclass(frozen=True, eq=False)
class FockSpace:
    """Occupation configurations ordered by total number, then descending lex."""

    K: int
    n_max: int
    N_max: int
    configs: np.ndarray = field(repr=False)
    _lowering: tuple = field(repr=False)
    digest: str = ""

    @property
    def dim(self) -> int:
        return self.configs.shape[0]

    @cached_property
    def totals(self) -> np.ndarray:
        return self.configs.sum(axis=1).astype(float)

    def index(self, config) -> int:
        key = _row_keys(np.asarray(config, dtype=np.int16)[None, :])
        keys = _row_keys(self.configs)
        order = np.argsort(keys, kind="stable")
        pos = np.searchsorted(keys[order], key[0])
        if pos >= self.dim or keys[order][pos] != key[0]:
            raise KeyError(tuple(config))
        return int(order[pos])

    def config(self, i: int) -> tuple:
        return tuple(int(v) for v in self.configs[i])

    def lowering(self, j: int) -> sp.csr_matrix:
        """Sparse matrix of ``a_j`` on the truncated space."""
        return self._lowering[j]


def _row_keys(configs):
    c = np.ascontiguousarray(configs.astype(">i2"))
    return c.view(f"V{2 * configs.shape[1]}").ravel()


def enumerate_fock(K: int, n_max: int, N_max: int, max_dim: int = DEFAULT_MAX_DIM) -> FockSpace:
    if K < 1 or n_max < 1 or N_max < 1:
        raise ValueError("K, n_max and N_max must all be >= 1")
    dim = fock_dimension(K, n_max, N_max)
    if dim > max_dim:
        raise CapacityError(f"Fock dimension {dim} exceeds budget {max_dim}", dim)
    cap = min(n_max, N_max)
    configs = np.vstack([_compositions(K, m, cap) for m in range(N_max + 1)])
    _compositions.cache_clear()
    keys = _row_keys(configs)
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    lowering = []
    for j in range(K):
        src = np.flatnonzero(configs[:, j] > 0)
        target = configs[src].copy()
        target[:, j] -= 1
        dst = order[np.searchsorted(sorted_keys, _row_keys(target))]
        vals = np.sqrt(configs[src, j].astype(float))
        lowering.append(sp.csr_matrix((vals, (dst, src)), shape=(dim, dim)))
    digest = hashlib.sha256(f"{K}:{n_max}:{N_max}".encode()).hexdigest()[:16]
    return FockSpace(K, n_max, N_max, configs, tuple(lowering), digest)


def apply_annihilation(j: int, v: np.ndarray, fs: FockSpace) -> np.ndarray:
    return fs.lowering(j) @ v


def apply_creation(j: int, v: np.ndarray, fs: FockSpace) -> np.ndarray:
    return fs.lowering(j).T @ v


def apply_number(v: np.ndarray, fs: FockSpace) -> np.ndarray:
    return fs.totals * v
