"""Run configuration: TOML (or JSON) text <-> :class:`RunConfig`.

Units: lengths in atomic box units, momenta and energies in natural units
(hbar = mass = 1).  Every table and key is optional except ``model.q`` and
``sweep.kappas``; missing values take the defaults of the dataclasses below.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli
import tomli_w

from .atomic import GridSpec, PotentialSpec
from .errors import ConfigError, InvalidPotentialError
from .model import ModelConfig

__all__ = ["Checks", "RunConfig", "load_config", "parse_config", "dump_config", "to_dict"]

_POTENTIAL_KINDS = ("harmonic", "gaussian_well", "free", "tabulated")


@dataclass(frozen=True)
class Checks:
    pull_through: bool = True
    ine1: bool = True
    binding: bool = False
    localization: bool = False
    constants: bool = True


@dataclass(frozen=True)
class RunConfig:
    """Everything one invocation needs.

    ``model`` is the template; its ``kappa`` is the first sweep entry.
    ``kind`` is ``"nelson"`` (coupled particle) or ``"vanhove"`` (frozen
    particle with atomic energy ``e_at``).  ``custom_omega``/``custom_coupling``
    replace the shell quadrature in the ``oracle`` subcommand only.
    """

    model: ModelConfig
    kappas: tuple
    kind: str = "nelson"
    e_at: float = 0.0
    table: str | None = None
    tail_gate: float = 1e-4
    max_iter: int = 50000
    binding_tol: float = 1e-3
    checks: Checks = field(default_factory=Checks)
    decay_rate: float = 0.0
    decay_radius: float = 4.0
    custom_omega: tuple | None = None
    custom_coupling: tuple | None = None
    out: str = "out"
    cache: bool = True
    jobs: int = 1


class _Section:
    """Typed access to one TOML table, recording the keys consumed."""

    def __init__(self, data, name):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{name}: expected a table")
        self.data, self.name, self.used = data, name, set()

    def get(self, key, kind, default=None, required=False):
        path = f"{self.name}.{key}"
        if key not in self.data:
            if required:
                raise ConfigError(f"{path}: required")
            return default
        self.used.add(key)
        return _coerce(self.data[key], kind, path)

    def finish(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(f"{self.name}.{extra[0]}: unknown key")


def _coerce(value, kind, path):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{path}: must be finite, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if kind == "floats":
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{path}: expected a non-empty list of numbers")
        return tuple(_coerce(v, float, f"{path}[{i}]") for i, v in enumerate(value))
    raise TypeError(kind)


_TABLES = ("model", "potential", "grid", "atomic", "modes", "fock", "solver", "sweep",
           "checks", "localization", "run")


def parse_config(data: dict, base_dir: Path | str = ".") -> RunConfig:
    """Validate a nested mapping and fill defaults."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table")
    for key in data:
        if key not in _TABLES:
            raise ConfigError(f"{key}: unknown table")
    s = {name: _Section(data.get(name), name) for name in _TABLES}

    m = s["model"]
    kind = m.get("kind", str, "nelson")
    if kind not in ("nelson", "vanhove"):
        raise ConfigError(f"model.kind: expected 'nelson' or 'vanhove', got {kind!r}")
    q = m.get("q", float, required=True)
    e_at = m.get("e_at", float, 0.0)

    p = s["potential"]
    pkind = p.get("kind", str, "free" if kind == "vanhove" else None, required=kind == "nelson")
    if pkind not in _POTENTIAL_KINDS:
        raise ConfigError(f"potential.kind: expected one of {_POTENTIAL_KINDS}, got {pkind!r}")
    table = p.get("table", str)
    pot_kw = dict(
        omega0=p.get("omega0", float, 1.0), depth=p.get("depth", float, 0.0),
        width=p.get("width", float, 1.0), declared_class=p.get("class", str),
        c1=p.get("c1", float), c2=p.get("c2", float),
    )
    try:
        if pkind == "tabulated":
            if table is None:
                raise ConfigError("potential.table: required for a tabulated potential")
            potential = PotentialSpec.from_table(Path(base_dir) / table, pot_kw["declared_class"],
                                                 pot_kw["c1"], pot_kw["c2"])
        else:
            potential = PotentialSpec(pkind, **pot_kw)
    except (InvalidPotentialError, OSError) as exc:
        raise ConfigError(f"potential: {exc}") from exc

    g = s["grid"]
    try:
        grid = GridSpec(g.get("dim", int, 1 if kind == "vanhove" else 3),
                        g.get("half_extent", float, 8.0), g.get("points", int, 41))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc

    a, mo, fk, so = s["atomic"], s["modes"], s["fock"], s["solver"]
    sw, ch, lo, ru = s["sweep"], s["checks"], s["localization"], s["run"]
    kappas = sw.get("kappas", "floats", required=True)
    cutoff = mo.get("cutoff", float, 1.0)
    for i, k in enumerate(kappas):
        if not 0 < k < cutoff:
            raise ConfigError(f"sweep.kappas[{i}]: {k} outside (0, cutoff={cutoff})")
    for i in range(1, len(kappas)):
        if kappas[i] >= kappas[i - 1]:
            raise ConfigError(f"sweep.kappas[{i}]: list must be strictly decreasing")
    spacing = mo.get("spacing", str, "log")
    if spacing not in ("log", "linear"):
        raise ConfigError(f"modes.spacing: expected 'log' or 'linear', got {spacing!r}")
    directions = mo.get("directions", int, 1)
    if directions not in (1, 6, 12):
        raise ConfigError(f"modes.directions: expected 1, 6 or 12, got {directions}")
    custom_omega = mo.get("omega", "floats")
    custom_coupling = mo.get("coupling", "floats")
    if (custom_omega is None) != (custom_coupling is None) or (
        custom_omega is not None and len(custom_omega) != len(custom_coupling)
    ):
        raise ConfigError("modes.omega/modes.coupling: give both, with equal lengths")
    if custom_omega is not None and min(custom_omega) <= 0:
        raise ConfigError("modes.omega: frequencies must be positive")

    def positive(section, key, kind, default):
        v = section.get(key, kind, default)
        if v is not None and not v > 0:
            raise ConfigError(f"{section.name}.{key}: must be positive, got {v}")
        return v

    try:
        model = ModelConfig(
            q=q, potential=potential, grid=grid,
            levels=positive(a, "levels", int, 4),
            kappa=kappas[0], cutoff=cutoff,
            shells=positive(mo, "shells", int, None),
            shells_per_decade=positive(mo, "shells_per_decade", int, 12),
            directions=directions, spacing=spacing,
            mu=positive(mo, "mu", float, 1.0), nu=mo.get("nu", float),
            n_max=positive(fk, "n_max", int, None),
            N_max=positive(fk, "N_max", int, 5),
            atomic_tol=positive(a, "tol", float, 1e-8),
            eig_tol=positive(so, "eig_tol", float, 1e-10),
            lin_tol=positive(so, "lin_tol", float, 1e-11),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc

    checks = Checks(**{f.name: ch.get(f.name, bool, f.default) for f in fields(Checks)})
    decay_rate = lo.get("C0", float, 0.0)
    if decay_rate < 0:
        raise ConfigError("localization.C0: must be non-negative")
    cfg = RunConfig(
        model=model, kappas=kappas, kind=kind, e_at=e_at, table=table,
        tail_gate=positive(sw, "tail_gate", float, 1e-4),
        max_iter=positive(so, "max_iter", int, 50000),
        binding_tol=positive(so, "binding_tol", float, 1e-3),
        checks=checks, decay_rate=decay_rate,
        decay_radius=positive(lo, "N0", float, 4.0),
        custom_omega=custom_omega, custom_coupling=custom_coupling,
        out=ru.get("out", str, "out"), cache=ru.get("cache", bool, True),
        jobs=positive(ru, "jobs", int, 1),
    )
    for sec in s.values():
        sec.finish()
    return cfg


def to_dict(cfg: RunConfig) -> dict:
    """Nested mapping accepted by :func:`parse_config`; ``None`` values are omitted."""
    m, p, g = cfg.model, cfg.model.potential, cfg.model.grid
    pot = {"kind": p.kind, "omega0": p.omega0, "depth": p.depth, "width": p.width,
           "class": p.declared_class, "c1": p.c1, "c2": p.c2, "table": cfg.table}
    if p.kind != "tabulated":
        pot.pop("table")
    out = {
        "model": {"kind": cfg.kind, "q": m.q, "e_at": cfg.e_at},
        "potential": pot,
        "grid": {"dim": g.dim, "half_extent": g.half_extent, "points": g.points},
        "atomic": {"levels": m.levels, "tol": m.atomic_tol},
        "modes": {"cutoff": m.cutoff, "shells": m.shells,
                  "shells_per_decade": m.shells_per_decade, "directions": m.directions,
                  "spacing": m.spacing, "mu": m.mu, "nu": m.nu,
                  "omega": _list(cfg.custom_omega), "coupling": _list(cfg.custom_coupling)},
        "fock": {"N_max": m.N_max, "n_max": m.n_max},
        "solver": {"eig_tol": m.eig_tol, "lin_tol": m.lin_tol, "max_iter": cfg.max_iter,
                   "binding_tol": cfg.binding_tol},
        "sweep": {"kappas": list(cfg.kappas), "tail_gate": cfg.tail_gate},
        "checks": asdict(cfg.checks),
        "localization": {"C0": cfg.decay_rate, "N0": cfg.decay_radius},
        "run": {"out": cfg.out, "cache": cfg.cache, "jobs": cfg.jobs},
    }
    return {k: {kk: vv for kk, vv in v.items() if vv is not None} for k, v in out.items()}


def _list(values):
    return None if values is None else list(values)


def dump_config(cfg: RunConfig, path=None) -> str:
    """TOML text for ``cfg`` (written to ``path`` when given)."""
    text = tomli_w.dumps(to_dict(cfg))
    if path is not None:
        Path(path).write_text(text)
    return text


def load_config(path) -> RunConfig:
    """Read a ``.toml`` or ``.json`` config file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            data = json.loads(raw)
        else:
            data = tomli.loads(raw.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, path.parent)


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
