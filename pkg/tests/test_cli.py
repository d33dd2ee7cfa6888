import json

import numpy as np
import pytest

from hardneedles.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, main
from hardneedles.config import (
    SCHEMAS,
    ConfigError,
    RunConfig,
    format_config,
    parse_config,
    parse_text,
    write_csv,
)


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


# ---------------------------------------------------------------- config

@pytest.mark.parametrize("sub", sorted(SCHEMAS))
def test_empty_config_gives_defaults(sub, tmp_path):
    f = tmp_path / "empty.cfg"
    f.write_text("# nothing here\n\n")
    cfg = parse_config(sub, f)
    assert cfg.values == {k: f.default for k, f in SCHEMAS[sub].items()} | {"seed": 0}


def test_grammar_comments_and_overrides(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("phi = 5.5   # above threshold\n  D_R=2\n# nmax = 3\n")
    cfg = parse_config("stability", f, ["D_R=3.5"])
    assert cfg["phi"] == 5.5 and cfg["D_R"] == 3.5 and cfg["nmax"] == 10


def test_validation_names_field():
    with pytest.raises(ConfigError, match="phi"):
        parse_config("stability", overrides=["phi=-1"])
    with pytest.raises(ConfigError, match="bogus"):
        parse_config("stability", overrides=["bogus=1"])
    with pytest.raises(ConfigError, match="nmax"):
        parse_config("stability", overrides=["nmax=2.5"])
    with pytest.raises(ConfigError, match="M"):
        parse_config("mkv-evolve", overrides=["M=7"])
    with pytest.raises(ConfigError, match="line|expected"):
        parse_text("phi 3\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("phi = 1\nphi = 2\n")
    with pytest.raises(ConfigError):
        parse_config("stability", "/nonexistent/file.cfg")


def test_large_seed_is_exact():
    cfg = parse_config("simulate", overrides=[f"seed={2**64 - 1}"])
    assert cfg["seed"] == 2**64 - 1
    assert parse_config("simulate", overrides=["N=1e3"])["N"] == 1000


@pytest.mark.parametrize("sub", sorted(SCHEMAS))
def test_config_text_round_trip(sub, tmp_path):
    cfg = parse_config(sub, overrides=["seed=17"])
    f = tmp_path / "c.cfg"
    f.write_text(format_config(cfg))
    assert parse_config(sub, f) == cfg


def test_manifest_round_trip(tmp_path):
    assert main(["stability", "--out", str(tmp_path), "--set", "phi=6.25", "--set", "seed=4"]) == EXIT_OK
    man = json.loads((tmp_path / "manifest.json").read_text())
    cfg = RunConfig.from_dict(man["config"])
    assert cfg == parse_config("stability", overrides=["phi=6.25", "seed=4"])
    assert man["seed"] == 4 and man["version"]
    # every default is recorded
    assert set(man["config"]["values"]) == set(SCHEMAS["stability"]) | {"seed"}


def test_csv_format(tmp_path):
    write_csv(tmp_path / "a.csv", ["x", "y"], [[0.1, 1 / 3], [2.0, np.pi]])
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "x,y"
    assert lines[1] == "0.10000000000000001,2"
    assert float(lines[2].split(",")[1]) == np.pi
    with pytest.raises(ValueError):
        write_csv(tmp_path / "b.csv", ["x", "y"], [[1, 2], [1]])


# ---------------------------------------------------------------- commands

def test_tmatrix_emits_fig2(tmp_path):
    assert main(["tmatrix", "--out", str(tmp_path)]) == EXIT_OK
    h, d = read_csv(tmp_path / "fig2.csv")
    assert h == ["theta", "T11", "T12", "T22"] and d.shape == (200, 4)
    h, d = read_csv(tmp_path / "tmatrix.csv")
    assert h == ["theta", "a1", "a2", "T11", "T12", "T22"]
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["results"]["mu"] == pytest.approx(2.18, abs=0.01)


def test_tmatrix_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["tmatrix", "--out", str(tmp_path / d), "--set", "n_points=20"]) == EXIT_OK
    for f in ("fig2.csv", "tmatrix.csv", "ttable.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_mkv_evolve_emits_fig3b(tmp_path):
    assert main(["mkv-evolve", "--out", str(tmp_path), "--set", "M=128"]) == EXIT_OK
    h, d = read_csv(tmp_path / "fig3b.csv")
    assert h == ["theta", "p_t0", "p_t4", "p_t6", "p_t8", "p_t10", "p_t12", "p_t20"]
    np.testing.assert_allclose(d[:, 1], 1 / np.pi - 0.01 * np.cos(2 * d[:, 0]), atol=1e-15)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["results"]["aligned_l2_to_stationary"] < 1e-4


def test_mkv_stationary_sweep_emits_fig3a(tmp_path):
    assert main(["mkv-stationary", "--sweep", "--out", str(tmp_path), "--set", "M=128"]) == EXIT_OK
    h, d = read_csv(tmp_path / "fig3a.csv")
    assert len(h) == 12 and d.shape[1] == 12
    assert np.all(np.diff(d[:, 1:].max(axis=0)) > 0)


def test_stability_output(tmp_path, capsys):
    assert main(["stability", "--out", str(tmp_path), "--set", "phi=4"]) == EXIT_OK
    assert "critical phi = 4.71238898038468" in capsys.readouterr().out
    _, d = read_csv(tmp_path / "stability.csv")
    assert np.all(d[:, 1] < 0)


def test_simulate_is_deterministic(tmp_path):
    args = ["simulate", "--set", "N=40", "--set", "eps=0.1", "--set", "t_end=0.02", "--set", "observe_every=0.01",
            "--set", "seed=123", "--set", "dt=1e-4"]
    for d in ("a", "b"):
        assert main(args + ["--out", str(tmp_path / d)]) == EXIT_OK
    for f in ("observables.csv", "angle_hist.csv", "final_state.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["results"]["overlaps_final"] == 0


def test_simulate_rejects_oversized_needles(tmp_path):
    assert main(["simulate", "--set", "eps=0.7", "--out", str(tmp_path)]) == EXIT_INVALID


def test_pde3d_and_hydro(tmp_path):
    assert main(["pde3d", "--out", str(tmp_path / "p"), "--set", "Nx=8", "--set", "Ny=8", "--set", "Ntheta=8",
                 "--set", "t_end=0.1", "--set", "phi=2"]) == EXIT_OK
    man = json.loads((tmp_path / "p" / "manifest.json").read_text())
    np.testing.assert_allclose(man["results"]["mass"], 1.0, atol=1e-12)
    h, d = read_csv(tmp_path / "p" / "rho.csv")
    assert h == ["time", "x", "y", "rho"] and d.shape == (128, 4)
    assert main(["hydro", "--out", str(tmp_path / "h")]) == EXIT_OK
    man = json.loads((tmp_path / "h" / "manifest.json").read_text())
    assert man["results"]["max_needle_disk_difference"] < 1e-12


def test_numerical_failure_exit_code(tmp_path):
    code = main(["pde3d", "--out", str(tmp_path), "--set", "Nx=8", "--set", "Ny=8", "--set", "Ntheta=8",
                 "--set", "phi=5000", "--set", "amplitude=0.9", "--set", "dt=0.5", "--set", "t_end=5"])
    assert code == EXIT_NUMERICAL


def test_invalid_input_exit_code(tmp_path, capsys):
    assert main(["stability", "--set", "phi=-1", "--out", str(tmp_path)]) == EXIT_INVALID
    assert "phi" in capsys.readouterr().err


def test_thread_variable(tmp_path, monkeypatch):
    monkeypatch.setenv("NEEDLES_THREADS", "zero")
    assert main(["stability", "--out", str(tmp_path)]) == EXIT_INVALID
    monkeypatch.setenv("NEEDLES_THREADS", "1")
    assert main(["stability", "--out", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "manifest.json").read_text())["results"]["threads"] == 1


def test_print_config(capsys):
    assert main(["hydro", "--print-config", "--set", "N=7"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "N = 7" in out and "eps = 0.05" in out
