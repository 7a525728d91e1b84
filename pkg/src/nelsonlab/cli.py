"""Command-line driver: ``nelsonlab {atomic,oracle,sweep,verify}``.

Exit codes: 0 success, 2 configuration error, 3 solver failure (or no
sweep point succeeded), 4 a gating check failed beyond its slack.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .atomic import atomic_basis, position_moment_matrices, validate_class
from .config import RunConfig, load_config, parse_config, with_overrides
from .errors import ConfigError, InfeasibleDecayError, NelsonLabError
from .field import build_modes, custom_modes, enumerate_fock
from .ircheck import (
    binding_energy,
    compute_Cq,
    evaluate_point,
    j_decomposition,
    kappa_sweep,
    localization_report,
    number_identity_gap,
    pull_through_residual,
    resolvent_solves,
)
from .model import assemble_van_hove, van_hove_closed_form
from .spectral import GroundState, expectation, lanczos_ground

log = logging.getLogger("nelsonlab")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4

SWEEP_COLUMNS = ("kappa", "E", "N_expect", "N_sum_a", "S1", "S2", "x2", "dx", "pt_resid_max",
                 "tail_weight", "ine1_lower", "ine1_upper", "slack_lower", "slack_upper")

PRESETS = ("vanhove", "harmonic_c1", "gaussian_c2")

# tolerance of the exact number identity on the truncated space
NUMBER_IDENTITY_TOL = 1e-10


class GroundStateCache:
    """Ground states on disk, keyed by a hash of everything that determines them."""

    def __init__(self, directory):
        self.directory = Path(directory)

    @staticmethod
    def key(cfg, kappa, model, e_at) -> str:
        payload = json.dumps(
            {"cfg": dataclasses.asdict(cfg), "kappa": kappa, "model": model, "e_at": e_at},
            sort_keys=True, default=repr,
        )
        return hashlib.sha256(payload.encode()).hexdigest()

    def _path(self, *args) -> Path:
        return self.directory / f"{self.key(*args)}.npz"

    def get(self, cfg, kappa, model, e_at) -> GroundState | None:
        path = self._path(cfg, kappa, model, e_at)
        if not path.exists():
            return None
        with np.load(path) as z:
            log.info("cache hit %s", path.name)
            return GroundState(float(z["energy"]), z["vector"], float(z["residual"]),
                               int(z["iterations"]), float(z["tail_weight"]), float(z["gap"]),
                               tuple(z["history"].tolist()))

    def put(self, cfg, kappa, model, e_at, gs: GroundState):
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self._path(cfg, kappa, model, e_at)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, energy=gs.energy, vector=gs.vector, residual=gs.residual,
                 iterations=gs.iterations, tail_weight=gs.tail_weight, gap=gs.gap,
                 history=np.asarray(gs.history, dtype=float))
        tmp.replace(path)


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: Path, data: dict):
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def _sweep_row(rec):
    ine = rec.ine1
    nan = float("nan")
    return (rec.kappa, rec.energy, rec.n_expect, rec.n_sum_a, rec.s1, rec.s2, rec.x2, rec.dx,
            rec.pt_resid_max, rec.tail_weight,
            ine.lower if ine else nan, ine.upper if ine else nan,
            ine.slack_lower if ine else nan, ine.slack_upper if ine else nan)


def _bracket_tol(rec):
    return 1e-8 + rec.eig_residual


def _record_verdicts(rec, run: RunConfig) -> dict:
    """Per-point verdicts.  ``self_energy_literal`` is informational; the sound
    bracket ``square_lower <= E <= E_at`` is the gating one."""
    tol = _bracket_tol(rec)
    out = {
        "number_identity": abs(rec.n_expect - rec.n_sum_a) <= NUMBER_IDENTITY_TOL,
        "self_energy_literal": rec.bracket_lower - tol <= rec.energy <= rec.bracket_upper + tol,
        "self_energy_square": rec.square_lower - tol <= rec.energy <= rec.bracket_upper + tol,
    }
    if rec.ine1 is not None and run.checks.ine1:
        ine = rec.ine1
        out["ine1_bracket"] = min(ine.slack_lower, ine.slack_upper) >= -ine.allowance
        out["ine1_triangle"] = min(ine.tri_upper_slack, ine.tri_lower_slack) >= -ine.allowance
    if run.checks.pull_through and math.isfinite(rec.s2):
        out["s2_discrete_cap"] = rec.s2 <= rec.s2_discrete_cap + 4 * rec.pt_resid_sumsq + 1e-14
    return out


GATING = ("number_identity", "self_energy_square", "ine1_bracket", "ine1_triangle",
          "s2_discrete_cap", "x2_bound", "binding", "localization_finite", "slope_bracket")


def _gate(verdicts: dict) -> bool:
    return all(v for k, v in verdicts.items() if k in GATING)


def _constants(run: RunConfig):
    m = run.model
    if not run.checks.constants or m.q == 0 or run.kind != "nelson":
        return None
    c1, c2 = m.potential.class_constants()
    return compute_Cq(m.q, m.cutoff, c1, c2)


def cmd_atomic(run: RunConfig, out: Path) -> int:
    m = run.model
    basis = atomic_basis(m.potential, m.grid, m.levels, m.atomic_tol)
    write_csv(out / "atomic.csv", ("level", "energy", "residual"),
              [(i, float(e), float(r)) for i, (e, r) in
               enumerate(zip(basis.energies, basis.residuals))])
    report = {"e_at": basis.e_at, "levels": basis.M, "grid": dataclasses.asdict(m.grid),
              "potential": m.potential.kind, "digest": basis.digest}
    status = EXIT_OK
    if m.potential.declared_class is not None:
        try:
            cr = validate_class(m.potential, basis)
            report["class"] = dataclasses.asdict(cr)
        except NelsonLabError as exc:
            report["class_error"] = f"{type(exc).__name__}: {exc}"
            status = EXIT_CHECK
    write_json(out / "atomic.json", report)
    return status


def _oracle_modes(run: RunConfig, kappa):
    m = run.model
    if run.custom_omega is not None:
        return custom_modes(run.custom_omega, run.custom_coupling)
    return build_modes(kappa, m.cutoff, m.with_kappa(kappa).shell_count, m.directions,
                       m.spacing, m.mu, m.nu)


def cmd_oracle(run: RunConfig, out: Path) -> int:
    m = run.model
    kappas = run.kappas[:1] if run.custom_omega is not None else run.kappas
    rows, worst = [], 0.0
    for kappa in kappas:
        modes = _oracle_modes(run, kappa)
        fock = enumerate_fock(modes.K, m.mode_cap, m.N_max)
        H = assemble_van_hove(modes, run.e_at, m.q, fock)
        gs = lanczos_ground(H, tol=m.eig_tol, max_iter=run.max_iter)
        cf = van_hove_closed_form(modes, run.e_at, m.q)
        n = expectation(gs.vector, H.number)
        worst = max(worst, abs(gs.energy - cf.energy), abs(n - cf.number))
        rows.append((float(kappa) if run.custom_omega is None else float("nan"), modes.K,
                     gs.energy, cf.energy, n, cf.number, gs.tail_weight))
    write_csv(out / "oracle.csv",
              ("kappa", "modes", "E_diag", "E_closed", "N_diag", "N_closed", "tail_weight"), rows)
    write_json(out / "oracle.json", {"max_abs_deviation": worst, "points": len(rows)})
    return EXIT_OK


def cmd_sweep(run: RunConfig, out: Path, cache) -> int:
    m = run.model
    basis = None
    if run.kind == "nelson":
        basis = atomic_basis(m.potential, m.grid, m.levels, m.atomic_tol)
    rep = kappa_sweep(m, run.kappas, model=run.kind, e_at=run.e_at, decay_rate=run.decay_rate,
                      pull_through=run.checks.pull_through or run.checks.ine1,
                      tail_gate=run.tail_gate, jobs=run.jobs, ground_cache=cache, basis=basis,
                      max_iter=run.max_iter)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, [_sweep_row(r) for r in rep.records])
    points = {repr(r.kappa): _record_verdicts(r, run) for r in rep.records}
    verdicts = {"points_ok": all(_gate(v) for v in points.values())}
    lo, hi = rep.bracket
    center = m.q**2 / (4 * math.pi**2)
    if len(rep.records) >= 2 and m.q != 0:
        verdicts["slope_bracket"] = lo <= rep.slope <= hi
        if run.kind == "vanhove":
            verdicts["slope_center_5pct"] = abs(rep.slope - center) <= 0.05 * center
    constants = _constants(run)
    if constants is not None and constants.feasible and constants.x2_bound is not None:
        verdicts["x2_bound"] = rep.sup_x2 <= constants.x2_bound
    summary = {
        "fit": {"slope": rep.slope, "intercept": rep.intercept, "bracket": list(rep.bracket),
                "center": center},
        "sup_x2": rep.sup_x2,
        "monotone": rep.monotone,
        "failures": [{"kappa": k, "reason": r} for k, r in rep.failures],
        "points": points,
        "verdicts": verdicts,
        "constants": dataclasses.asdict(constants) if constants is not None else None,
        "records": [dataclasses.asdict(r) for r in rep.records],
    }
    write_json(out / "sweep.json", summary)
    if not rep.records:
        return EXIT_SOLVER
    return EXIT_OK if _gate(verdicts) and verdicts["points_ok"] else EXIT_CHECK


def cmd_verify(run: RunConfig, out: Path, cache) -> int:
    m = run.model
    kappa = run.kappas[0]
    basis = None
    if run.kind == "nelson":
        basis = atomic_basis(m.potential, m.grid, m.levels, m.atomic_tol)
    rec, gs, H = evaluate_point(m, kappa, basis, model=run.kind, e_at=run.e_at,
                                decay_rate=run.decay_rate, pull_through=True,
                                max_iter=run.max_iter, ground_cache=cache)
    verdicts = _record_verdicts(rec, run)
    report = {"record": dataclasses.asdict(rec)}
    solves = resolvent_solves(gs, H, m.lin_tol)
    pt = pull_through_residual(gs, H, solves)
    X2 = (position_moment_matrices(basis).x2 if basis is not None
          else np.zeros((1, 1)))
    jd = j_decomposition(gs, H, X2, solves)
    report["pull_through"] = {"norms": pt.norms.tolist(), "max": pt.max, "mean": pt.mean,
                              "ratio_to_tail": pt.ratio_to_tail}
    report["j_decomposition"] = {
        "S1": jd.s1, "S2": jd.s2, "N_meas": jd.n_meas, "S1_cont": jd.s1_cont,
        "S2_cap": jd.s2_cap, "S2_discrete_cap": jd.s2_discrete_cap,
        "consistency_minus_residual": float(np.max(np.abs(jd.consistency - pt.norms))),
    }
    report["number_identity_gap"] = number_identity_gap(gs, H)
    constants = _constants(run)
    if constants is not None:
        report["constants"] = dataclasses.asdict(constants)
        if constants.feasible and constants.x2_bound is not None:
            verdicts["x2_bound"] = rec.x2 <= constants.x2_bound
    pot = m.potential
    if run.kind == "nelson" and run.checks.binding and pot.declared_class == "C2":
        b = binding_energy(m.with_kappa(kappa), run.binding_tol, basis, run.max_iter)
        report["binding"] = {**dataclasses.asdict(b), "margin": b.margin}
        verdicts["binding"] = b.ok
    if run.kind == "nelson" and run.checks.localization:
        ops = position_moment_matrices(basis, 2.0 * run.decay_rate)
        try:
            loc = localization_report(gs, H, ops, run.decay_rate, run.decay_radius, basis, pot)
            report["localization"] = dataclasses.asdict(loc)
            verdicts["localization_finite"] = loc.finite
        except InfeasibleDecayError as exc:
            report["localization"] = {"infeasible": str(exc), "margin": exc.margin}
    report["verdicts"] = verdicts
    write_json(out / "verify.json", report)
    return EXIT_OK if _gate(verdicts) else EXIT_CHECK


def preset_path(name: str):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("nelsonlab") / "presets" / f"{name}.toml"


def load_preset(name: str) -> RunConfig:
    import tomli

    text = preset_path(name).read_text()
    return parse_config(tomli.loads(text))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nelsonlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "atomic": "atomic eigenproblem only",
        "oracle": "van Hove closed form against diagonalization",
        "sweep": "full infrared sweep over the kappa list",
        "verify": "full check battery at the first kappa",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="TOML or JSON run configuration")
        src.add_argument("--preset", choices=PRESETS, help="shipped configuration")
        p.add_argument("--out", type=Path, help="output directory (overrides run.out)")
        p.add_argument("--jobs", type=int, help="worker processes for sweep points")
        p.add_argument("--no-cache", action="store_true", help="ignore the ground-state cache")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = load_config(args.config) if args.config else load_preset(args.preset)
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs: must be >= 1")
        run = with_overrides(run, out=str(args.out) if args.out else None, jobs=args.jobs,
                             cache=False if args.no_cache else None)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    cache = GroundStateCache(out / ".cache") if run.cache else None
    try:
        if args.command == "atomic":
            return cmd_atomic(run, out)
        if args.command == "oracle":
            return cmd_oracle(run, out)
        if args.command == "sweep":
            return cmd_sweep(run, out, cache)
        return cmd_verify(run, out, cache)
    except NelsonLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
