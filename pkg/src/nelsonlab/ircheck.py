"""Quantitative checks on solved ground states: pull-through residuals, the
dipole decomposition of ``a_j psi``, soft-boson number bounds, kappa sweeps,
binding energy, localization and the relative-bound constants.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .atomic import (
    AtomicBasis,
    AtomicOperators,
    PotentialSpec,
    atomic_basis,
    position_moment_matrices,
)
from .errors import InfeasibleDecayError, NelsonLabError, UnsupportedPotentialError
from .field import build_modes, enumerate_fock
from .model import (
    ModelConfig,
    NelsonMatrix,
    assemble_hamiltonian,
    assemble_van_hove,
    self_energy_bracket,
)
from .spectral import GroundState, expectation, lanczos_ground, shifted_solve

log = logging.getLogger(__name__)

__all__ = [
    "ResolventSolves",
    "PullThroughReport",
    "JDecomposition",
    "Ine1Check",
    "IrRecord",
    "SweepReport",
    "BindingReport",
    "LocalizationReport",
    "ConstantsReport",
    "resolvent_solves",
    "pull_through_residual",
    "j_decomposition",
    "check_ine1",
    "evaluate_point",
    "kappa_sweep",
    "fit_log_slope",
    "binding_energy",
    "localization_report",
    "compute_Cq",
    "number_identity_gap",
]

FOUR_PI2 = 4.0 * math.pi**2


@dataclass(frozen=True, eq=False)
class ResolventSolves:
    """``(H - E + w_j)^{-1}`` applied to ``(W_j x I) psi`` and ``((W_j - 1) x I) psi``."""

    full: np.ndarray
    dipole: np.ndarray


def resolvent_solves(gs: GroundState, H: NelsonMatrix, tol: float = 1e-11) -> ResolventSolves:
    K, psi = H.modes.K, gs.vector
    full = np.zeros((K, H.dim), dtype=complex)
    dipole = np.zeros((K, H.dim), dtype=complex)
    min_shift = float(H.modes.omega.min())
    eye = np.eye(H.levels)
    for j in range(K):
        w = H.modes.omega[j]
        W = H.plane_waves[j]
        full[j] = shifted_solve(H, gs.energy, w, H.atomic(W, psi), tol, min_shift=min_shift)
        if not np.array_equal(W, eye):
            dipole[j] = shifted_solve(H, gs.energy, w, H.atomic(W - eye, psi), tol,
                                      x0=full[j] - psi / w)
    return ResolventSolves(full, dipole)


@dataclass(frozen=True)
class PullThroughReport:
    norms: np.ndarray = field(repr=False)
    max: float
    mean: float
    sum_sq: float
    ratio_to_tail: float


def pull_through_residual(gs: GroundState, H: NelsonMatrix, solves: ResolventSolves | None = None,
                          tol: float = 1e-11) -> PullThroughReport:
    """``r_j = a_j psi + q g_j (H - E + w_j)^{-1} (W_j x I) psi`` for every mode."""
    if solves is None:
        solves = resolvent_solves(gs, H, tol)
    g = H.modes.coupling
    norms = np.array([
        np.linalg.norm(H.lower(j, gs.vector) + H.q * g[j] * solves.full[j])
        for j in range(H.modes.K)
    ])
    mx = float(norms.max())
    ratio = mx / math.sqrt(gs.tail_weight) if gs.tail_weight > 0 else (0.0 if mx == 0 else math.inf)
    return PullThroughReport(norms, mx, float(norms.mean()), float(np.sum(norms**2)), ratio)


@dataclass(frozen=True, eq=False)
class JDecomposition:
    j1_coeff: np.ndarray  # J1_j = j1_coeff[j] * psi
    j2: np.ndarray = field(repr=False)
    s1: float
    s2: float
    n_meas: float
    s1_cont: float
    s2_cap: float
    s2_discrete_cap: float
    x2: float
    consistency: np.ndarray = field(repr=False)  # ||a_j psi - J1_j - J2_j||


def j_decomposition(gs: GroundState, H: NelsonMatrix, X2: np.ndarray,
                    solves: ResolventSolves | None = None, tol: float = 1e-11) -> JDecomposition:
    """Split ``a_j psi`` into the dipole term ``J1`` and the recoil error ``J2``."""
    if solves is None:
        solves = resolvent_solves(gs, H, tol)
    modes, q, psi = H.modes, H.q, gs.vector
    g, w = modes.coupling, modes.omega
    coeff = -q * g / w
    j2 = -q * g[:, None] * solves.dipole
    lowered = [H.lower(j, psi) for j in range(modes.K)]
    n_meas = float(sum(np.vdot(v, v).real for v in lowered))
    s1 = float(np.sum(np.abs(coeff) ** 2) * np.vdot(psi, psi).real)
    s2 = float(np.sum(np.abs(j2) ** 2))
    x2 = expectation(psi, lambda v: H.atomic(X2, v))
    kappa, cutoff = modes.kappa, modes.cutoff
    consistency = np.array([
        np.linalg.norm(lowered[j] - coeff[j] * psi - j2[j]) for j in range(modes.K)
    ])
    return JDecomposition(
        coeff, j2, s1, s2, n_meas,
        q**2 * math.log(cutoff / kappa) / FOUR_PI2,
        q**2 * cutoff**2 * x2 / (8 * math.pi**2),
        q**2 * float(np.sum(g**2 * modes.kabs**2 / w**2)) * x2,
        x2, consistency,
    )


@dataclass(frozen=True)
class Ine1Check:
    lower: float
    upper: float
    slack_lower: float  # <N> - lower
    slack_upper: float  # upper - <N>
    tri_upper_slack: float  # 2 S1 + 2 S2 - N
    tri_lower_slack: float  # 2 N + 2 S2 - S1
    allowance: float  # 4 sum ||r_j||^2

    @property
    def ok(self) -> bool:
        return min(self.slack_lower, self.slack_upper, self.tri_upper_slack,
                   self.tri_lower_slack) >= -self.allowance


@dataclass(frozen=True)
class IrRecord:
    kappa: float
    energy: float
    n_expect: float
    n_sum_a: float
    s1: float
    s2: float
    s2_discrete_cap: float
    pt_resid_max: float
    pt_resid_mean: float
    pt_resid_sumsq: float
    pt_ratio: float
    x2: float
    abs_x: float
    dx: float
    tail_weight: float
    eig_residual: float
    e_at: float
    bracket_lower: float
    bracket_upper: float
    square_lower: float  # E_at - q^2 sum g^2 / w
    ine1: Ine1Check | None = None
    exp_moment: float | None = None
    shells: int = 0
    modes: int = 0
    dim: int = 0


def number_identity_gap(gs: GroundState, H: NelsonMatrix) -> float:
    """``|<N> - sum_j ||a_j psi||^2|``."""
    psi = gs.vector
    n = expectation(psi, H.number)
    total = sum(np.vdot(v, v).real for v in (H.lower(j, psi) for j in range(H.modes.K)))
    return abs(n - total)


def check_ine1(rec: IrRecord, q: float, kappa: float, cutoff: float) -> Ine1Check:
    """Soft-boson number bracket with the measured ``<x^2>`` substituted."""
    logr = math.log(cutoff / kappa)
    c = q**2 / (8 * math.pi**2)
    lower = c * logr - c * cutoff**2 * rec.x2
    upper = 4 * c * logr + 2 * c * cutoff**2 * rec.x2
    N = rec.n_expect
    return Ine1Check(
        lower, upper, N - lower, upper - N,
        2 * rec.s1 + 2 * rec.s2 - rec.n_sum_a,
        2 * rec.n_sum_a + 2 * rec.s2 - rec.s1,
        4 * rec.pt_resid_sumsq,
    )


def _position_stats(H: NelsonMatrix, psi: np.ndarray, ops: AtomicOperators | None):
    if ops is None:
        return 0.0, 0.0, 0.0, None
    rho = H.reduced_density(psi)

    def tr(A):
        return float(np.real(np.trace(A @ rho)))

    x2, ax = tr(ops.x2), tr(ops.abs_x)
    mean = np.array([tr(c) for c in ops.x])
    dx = math.sqrt(max(x2 - float(mean @ mean), 0.0))
    exp_m = tr(ops.exp_abs_x) if ops.decay_rate > 0 else 1.0
    return x2, ax, dx, exp_m


def evaluate_point(cfg: ModelConfig, kappa: float, basis: AtomicBasis | None = None,
                   model: str = "nelson", e_at: float = 0.0, decay_rate: float = 0.0,
                   pull_through: bool = True, max_iter: int = 50000,
                   ground_cache=None) -> tuple[IrRecord, GroundState, NelsonMatrix]:
    """Solve one kappa point and run the per-point checks.

    ``ground_cache`` may supply ``get(cfg, kappa, model, e_at)`` and
    ``put(cfg, kappa, model, e_at, gs)`` to reuse eigensolves.
    """
    pcfg = cfg.with_kappa(kappa)
    modes = build_modes(kappa, cfg.cutoff, pcfg.shell_count, cfg.directions, cfg.spacing,
                        cfg.mu, cfg.nu)
    fock = enumerate_fock(modes.K, pcfg.mode_cap, cfg.N_max)
    ops = None
    if model == "vanhove":
        H = assemble_van_hove(modes, e_at, cfg.q, fock)
        E_at = e_at
    else:
        if basis is None:
            basis = atomic_basis(cfg.potential, cfg.grid, cfg.levels, cfg.atomic_tol)
        H = assemble_hamiltonian(pcfg, basis, modes, fock)
        E_at = basis.e_at
        ops = position_moment_matrices(basis, 2.0 * decay_rate)
    gs = ground_cache.get(pcfg, kappa, model, e_at) if ground_cache is not None else None
    if gs is None:
        gs = lanczos_ground(H, tol=cfg.eig_tol, max_iter=max_iter)
        if ground_cache is not None:
            ground_cache.put(pcfg, kappa, model, e_at, gs)
    psi = gs.vector
    n_expect = expectation(psi, H.number)
    x2, ax, dx, exp_m = _position_stats(H, psi, ops)
    lo, up = self_energy_bracket(modes, E_at, cfg.q)
    square_lo = E_at - cfg.q**2 * float(np.sum(modes.coupling**2 / modes.omega))
    if pull_through:
        solves = resolvent_solves(gs, H, cfg.lin_tol)
        pt = pull_through_residual(gs, H, solves)
        X2 = ops.x2 if ops is not None else np.zeros((1, 1))
        jd = j_decomposition(gs, H, X2, solves)
        n_sum_a, s1, s2, s2cap = jd.n_meas, jd.s1, jd.s2, jd.s2_discrete_cap
        ptv = (pt.max, pt.mean, pt.sum_sq, pt.ratio_to_tail)
    else:
        n_sum_a = float(sum(np.vdot(v, v).real for v in (H.lower(j, psi) for j in range(modes.K))))
        g, w = modes.coupling, modes.omega
        s1 = cfg.q**2 * float(np.sum(g**2 / w**2))
        s2 = s2cap = float("nan")
        ptv = (float("nan"),) * 4
    rec = IrRecord(
        kappa, gs.energy, n_expect, n_sum_a, s1, s2, s2cap, *ptv, x2, ax, dx,
        gs.tail_weight, gs.residual, E_at, lo, up, square_lo, None, exp_m,
        modes.shells, modes.K, H.dim,
    )
    if pull_through:
        rec = _with_ine1(rec, cfg.q, kappa, cfg.cutoff)
    return rec, gs, H


def _with_ine1(rec: IrRecord, q, kappa, cutoff) -> IrRecord:
    from dataclasses import replace

    return replace(rec, ine1=check_ine1(rec, q, kappa, cutoff))


def fit_log_slope(kappas, values, cutoff) -> tuple[float, float]:
    """Least-squares ``values ~ slope * log(cutoff/kappa) + intercept``."""
    x = np.log(cutoff / np.asarray(kappas, dtype=float))
    if x.size < 2:
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(x, np.asarray(values, dtype=float), 1)
    return float(slope), float(intercept)


@dataclass(frozen=True)
class SweepReport:
    records: tuple
    failures: tuple  # (kappa, reason)
    slope: float
    intercept: float
    bracket: tuple[float, float]
    sup_x2: float
    monotone: bool

    @property
    def slope_in_bracket(self) -> bool:
        lo, hi = self.bracket
        return lo <= self.slope <= hi


def _sweep_job(args):
    cfg, kappa, basis, kw = args
    try:
        rec, gs, _ = evaluate_point(cfg, kappa, basis, **kw)
    except NelsonLabError as exc:
        return kappa, None, f"{type(exc).__name__}: {exc}"
    return kappa, rec, None


def kappa_sweep(cfg: ModelConfig, kappas, model: str = "nelson", e_at: float = 0.0,
                decay_rate: float = 0.0, pull_through: bool = True, tail_gate: float = 1e-4,
                jobs: int = 1, ground_cache=None, basis: AtomicBasis | None = None,
                max_iter: int = 50000) -> SweepReport:
    """Evaluate every kappa (strictly decreasing, inside ``(0, cutoff)``) and fit
    ``<N>`` against ``log(cutoff/kappa)``."""
    kappas = [float(k) for k in kappas]
    if any(not 0 < k < cfg.cutoff for k in kappas):
        raise ValueError("every kappa must lie in (0, cutoff)")
    if any(b >= a for a, b in zip(kappas, kappas[1:])):
        raise ValueError("kappa list must be strictly decreasing")
    if model != "vanhove" and basis is None:
        basis = atomic_basis(cfg.potential, cfg.grid, cfg.levels, cfg.atomic_tol)
    kw = dict(model=model, e_at=e_at, decay_rate=decay_rate, pull_through=pull_through,
              max_iter=max_iter, ground_cache=ground_cache)
    jobs_args = [(cfg, k, basis, kw) for k in kappas]
    if jobs > 1 and len(kappas) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_job, jobs_args))
    else:
        results = [_sweep_job(a) for a in jobs_args]
    records, failures = [], []
    for kappa, rec, err in results:
        if err is not None:
            log.warning("kappa=%g skipped: %s", kappa, err)
            failures.append((kappa, err))
        elif rec.tail_weight > tail_gate:
            failures.append((kappa, f"tail weight {rec.tail_weight:.3e} above gate {tail_gate:g}"))
        else:
            records.append(rec)
    slope, intercept = fit_log_slope([r.kappa for r in records],
                                     [r.n_expect for r in records], cfg.cutoff)
    c = cfg.q**2 / (8 * math.pi**2)
    ns = [r.n_expect for r in records]
    monotone = all(b >= a - 1e-12 for a, b in zip(ns, ns[1:]))
    if not monotone:
        log.warning("<N> not monotone along the sweep; truncation may be too small")
    sup_x2 = max((r.x2 for r in records), default=float("nan"))
    return SweepReport(tuple(records), tuple(failures), slope, intercept, (c, 4 * c), sup_x2,
                       monotone)


@dataclass(frozen=True)
class BindingReport:
    energy: float
    energy_free: float
    e_bin: float
    e_at: float
    free_offset: float
    tolerance: float

    @property
    def margin(self) -> float:
        """``E_bin - (-E_at - free_offset - tolerance)``; non-negative when the bound holds."""
        return self.e_bin + self.e_at + self.free_offset + self.tolerance

    @property
    def ok(self) -> bool:
        return self.margin >= 0


def binding_energy(cfg: ModelConfig, tolerance: float = 1e-3, basis: AtomicBasis | None = None,
                   max_iter: int = 50000) -> BindingReport:
    """Coupled ground energies with and without the potential on the same grid."""
    if cfg.potential.declared_class != "C2":
        raise UnsupportedPotentialError("binding energy needs a C2 potential (E_at < 0)")
    if basis is None:
        basis = atomic_basis(cfg.potential, cfg.grid, cfg.levels, cfg.atomic_tol)
    free_pot = PotentialSpec("free")
    free_basis = atomic_basis(free_pot, cfg.grid, cfg.levels, cfg.atomic_tol)
    energies = []
    for b in (basis, free_basis):
        modes = build_modes(cfg.kappa, cfg.cutoff, cfg.shell_count, cfg.directions, cfg.spacing,
                            cfg.mu, cfg.nu)
        fock = enumerate_fock(modes.K, cfg.mode_cap, cfg.N_max)
        H = assemble_hamiltonian(cfg, b, modes, fock)
        energies.append(lanczos_ground(H, tol=cfg.eig_tol, max_iter=max_iter).energy)
    E, E_free = energies
    return BindingReport(E, E_free, E_free - E, basis.e_at, free_basis.e_at, tolerance)


@dataclass(frozen=True)
class LocalizationReport:
    decay_rate: float
    radius: float
    margin: float | None
    exp_moment: float
    abs_x: float
    x2: float
    mean_x: tuple
    dx: float

    @property
    def finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.exp_moment, self.abs_x, self.x2, self.dx))


def localization_report(gs: GroundState, H: NelsonMatrix, ops: AtomicOperators, C0: float,
                        N0: float, basis: AtomicBasis,
                        potential: PotentialSpec | None = None) -> LocalizationReport:
    """Position moments of the ground state and the decay feasibility margin
    ``|E_at| - sup_{|x|>N0} |V| - C0^2`` (checked for C2 potentials only)."""
    if C0 < 0:
        raise ValueError("decay rate must be non-negative")
    if not math.isclose(ops.decay_rate, 2.0 * C0, rel_tol=0, abs_tol=1e-15):
        raise ValueError("operators must carry exp(2 C0 |x|)")
    margin = None
    if potential is None or potential.declared_class == "C2":
        r = basis.grid.radii()
        outside = np.abs(basis.potential[r > N0])
        sup_v = float(outside.max()) if outside.size else 0.0
        margin = abs(basis.e_at) - sup_v - C0**2
        if margin <= 0:
            raise InfeasibleDecayError(
                f"|E_at| - sup|V| - C0^2 = {margin:.4g} <= 0 (|E_at|={abs(basis.e_at):.4g}, "
                f"sup_(|x|>{N0})|V|={sup_v:.4g}, C0^2={C0**2:.4g})", margin,
            )
    x2, ax, dx, exp_m = _position_stats(H, gs.vector, ops)
    rho = H.reduced_density(gs.vector)
    mean = tuple(float(np.real(np.trace(c @ rho))) for c in ops.x)
    return LocalizationReport(C0, N0, margin, exp_m, ax, x2, mean, dx)


@dataclass(frozen=True)
class ConstantsReport:
    q: float
    cutoff: float
    feasible: bool
    eps: float = float("nan")
    eps_prime: float = float("nan")
    c_lambda1: float = float("nan")
    c_lambda2: float = float("nan")
    c_q: float = float("nan")
    x2_bound: float | None = None


def _c_lambda(eps, eps_p, cutoff):
    pre = math.sqrt(cutoff) / (2 * math.pi)
    c1 = pre * np.sqrt(2 * eps_p * (2 + eps))
    c2 = pre * np.sqrt((2 + eps) / (2 * eps_p) + 0.5 * (1 + 1 / (2 * eps)) * cutoff)
    return c1, c2


def compute_Cq(q: float, cutoff: float, c1: float | None = None, c2: float | None = None,
               points: int = 60, lo: float = 1e-3, hi: float = 1e3) -> ConstantsReport:
    """Grid-minimize ``(1 + |q| C2 + q^2 L^2/8pi^2) / (1 - |q| C1)`` over ``(eps, eps')``.

    With C1-class constants ``c1, c2`` the report also carries the bound
    ``<x^2> <= c1 C_q^2 + c1 + c2``.
    """
    if q == 0:
        raise ValueError("compute_Cq needs q != 0")
    grid = np.logspace(math.log10(lo), math.log10(hi), points)
    eps, eps_p = np.meshgrid(grid, grid, indexing="ij")
    C1, C2 = _c_lambda(eps, eps_p, cutoff)
    denom = 1 - abs(q) * C1
    obj = np.where(denom > 0, (1 + abs(q) * C2 + q**2 * cutoff**2 / (8 * math.pi**2))
                   / np.where(denom > 0, denom, 1.0), np.inf)
    i = np.unravel_index(int(np.argmin(obj)), obj.shape)
    if not np.isfinite(obj[i]):
        return ConstantsReport(q, cutoff, False)
    cq = float(obj[i])
    bound = None if c1 is None else c1 * cq**2 + c1 + (c2 or 0.0)
    return ConstantsReport(q, cutoff, True, float(eps[i]), float(eps_p[i]), float(C1[i]),
                           float(C2[i]), cq, bound)
