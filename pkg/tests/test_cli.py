import json

import pytest

from nelsonlab.cli import main

FAST_VANHOVE = """
[model]
kind = "vanhove"
q = 1.0

[modes]
shells_per_decade = 4

[fock]
N_max = 4

[sweep]
kappas = [0.2, 0.1, 0.05]
"""


def _write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_atomic_table(tmp_path):
    cfg = _write(tmp_path, """
[model]
q = 0.0
[potential]
kind = "harmonic"
[grid]
dim = 3
half_extent = 8.0
points = 41
[sweep]
kappas = [0.1]
""")
    assert main(["atomic", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "atomic.csv").read_text().splitlines()
    energies = [float(r.split(",")[1]) for r in rows[1:]]
    assert energies[0] == pytest.approx(1.5, abs=1e-2)
    assert energies[1:] == pytest.approx([2.5] * 3, abs=1e-2)
    report = json.loads((tmp_path / "o" / "atomic.json").read_text())
    assert report["class"]["c1"] == 2.0


def test_oracle_single_mode(tmp_path):
    cfg = _write(tmp_path, """
[model]
kind = "vanhove"
q = 1.0
[modes]
omega = [1.0]
coupling = [0.1]
[fock]
N_max = 10
[sweep]
kappas = [0.5]
""")
    assert main(["oracle", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    header, row = (tmp_path / "oracle.csv").read_text().splitlines()
    values = dict(zip(header.split(","), row.split(",")))
    assert float(values["E_closed"]) == pytest.approx(-0.01, abs=1e-15)
    assert float(values["E_diag"]) == pytest.approx(-0.01, abs=1e-10)
    assert float(values["N_diag"]) == pytest.approx(0.01, abs=1e-10)


def test_verify_zero_coupling_passes(tmp_path):
    cfg = _write(tmp_path, """
[model]
q = 0.0
[potential]
kind = "harmonic"
[grid]
dim = 1
half_extent = 6.0
points = 61
[atomic]
levels = 3
[sweep]
kappas = [0.2]
[checks]
localization = true
""")
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    verdicts = json.loads((tmp_path / "verify.json").read_text())["verdicts"]
    assert all(verdicts.values())


def test_zero_coupling_sweep_has_zero_slope(tmp_path):
    cfg = _write(tmp_path, FAST_VANHOVE.replace("q = 1.0", "q = 0.0"))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "sweep.json").read_text())
    assert abs(summary["fit"]["slope"]) <= 1e-14
    n_col = [float(r.split(",")[2]) for r in (tmp_path / "sweep.csv").read_text().splitlines()[1:]]
    assert max(n_col) <= 1e-20


def test_sweep_cache_and_determinism(tmp_path):
    cfg = _write(tmp_path, FAST_VANHOVE)
    outs = [tmp_path / name for name in ("cold", "cold2", "warm")]
    assert main(["sweep", "--config", str(cfg), "--out", str(outs[0]), "--no-cache"]) == 0
    assert main(["sweep", "--config", str(cfg), "--out", str(outs[1])]) == 0
    assert not (outs[0] / ".cache").exists()
    assert len(list((outs[1] / ".cache").glob("*.npz"))) == 3
    assert main(["sweep", "--config", str(cfg), "--out", str(outs[1]), "--jobs", "2"]) == 0
    for name in ("sweep.csv", "sweep.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    summary = json.loads((outs[0] / "sweep.json").read_text())
    assert summary["verdicts"]["slope_bracket"]


def test_config_error_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, FAST_VANHOVE.replace("0.05]", "1.5]"))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "sweep.kappas[2]" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "nope.toml")]) == 2


def test_solver_failure_exit_code(tmp_path):
    cfg = _write(tmp_path, FAST_VANHOVE + "\n[solver]\nmax_iter = 200\neig_tol = 1e-30\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 3


def test_presets_parse():
    from nelsonlab.cli import PRESETS, load_preset

    for name in PRESETS:
        cfg = load_preset(name)
        assert cfg.kappas
