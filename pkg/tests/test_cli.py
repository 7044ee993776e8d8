import json

import numpy as np
import subprocess
import sys

import pytest

from coulomb2d.cli import dispatch, main, parse_config
from coulomb2d.errors import ParseError
from coulomb2d.potential import build_induced, ginibre

SMALL = "n = 6\nchains = 2\nsweeps = 400\nburnin = 100\nthin = 5\nseed = 3\n"


def test_minimal_config_defaults():
    cfg = parse_config("# nothing but a comment\n\n")
    assert cfg.potential == ginibre()
    assert cfg.n > 0 and cfg.beta == 1


def test_all_errors_reported_with_lines():
    with pytest.raises(ParseError) as exc:
        parse_config("beta = -1\nbogus = 2\nn = many\nno equals sign\n")
    errs = exc.value.errors
    assert len(errs) == 4
    assert any("line 1" in e and "beta" in e for e in errs)
    assert any("line 2" in e and "bogus" in e for e in errs)
    assert any("line 3" in e for e in errs)
    assert any("line 4" in e for e in errs)


def test_induced_config_matches_programmatic():
    cfg = parse_config("potential.kind = induced\ninduced.s = 2\nn = 100\n")
    assert cfg.potential == build_induced(100, 2)


def test_potential_errors_surface():
    with pytest.raises(ParseError) as exc:
        parse_config("potential.kind = custom\npotential.delta = 1\npotential.sigma_outer = 1.1\n")
    assert any("potential" in e for e in exc.value.errors)


def test_sample_is_byte_identical(tmp_path):
    cfg = parse_config(SMALL)
    assert dispatch("sample", cfg, tmp_path / "a") == 0
    assert dispatch("sample", cfg, tmp_path / "b") == 0
    assert (tmp_path / "a/samples.txt").read_bytes() == (tmp_path / "b/samples.txt").read_bytes()
    man = json.loads((tmp_path / "a/manifest.json").read_text())
    assert man["seed"] == 3 and "samples.txt" in man["artifacts"]
    assert {"config_hash", "versions", "wall_time_s"} <= set(man)


def test_seed_override_and_env(tmp_path, monkeypatch):
    cfg = parse_config(SMALL.replace("seed = 3\n", ""))
    monkeypatch.setenv("COULOMB2D_SEED", "41")
    dispatch("droplet", cfg, tmp_path / "env")
    assert json.loads((tmp_path / "env/manifest.json").read_text())["seed"] == 41
    dispatch("droplet", cfg, tmp_path / "flag", seed=5)
    assert json.loads((tmp_path / "flag/manifest.json").read_text())["seed"] == 5


def test_density_csv_reproducible(tmp_path):
    cfg = parse_config(SMALL + "grid.bins = 8\n")
    dispatch("density", cfg, tmp_path / "a")
    dispatch("density", cfg, tmp_path / "b")
    assert (tmp_path / "a/density.csv").read_bytes() == (tmp_path / "b/density.csv").read_bytes()


def test_unknown_subcommand_exit_code(capsys):
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("beta = -1\n")
    assert main(["droplet", "--config", str(p), "--out", str(tmp_path)]) == 2


def test_thermal_and_compare(tmp_path):
    cfg = parse_config("n = 32\n")
    assert dispatch("thermal", cfg, tmp_path) == 0
    assert json.loads((tmp_path / "thermal.json").read_text())["passed"]
    assert dispatch("compare", cfg, tmp_path) == 0


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "coulomb2d", "droplet", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0
    d = json.loads((tmp_path / "droplet.json").read_text())
    assert d["r_out"] == pytest.approx(1)


def test_oracle_frames(tmp_path):
    cfg = parse_config("n = 64\nframes = 0; 1\n")
    assert dispatch("oracle", cfg, tmp_path) == 0
    bulk = np.loadtxt(tmp_path / "frame_0.csv", delimiter=",", skiprows=1)
    edge = np.loadtxt(tmp_path / "frame_1.csv", delimiter=",", skiprows=1)
    mid = len(bulk) // 2
    assert bulk[mid, 1] == pytest.approx(1, abs=1e-6)
    assert 0.4 < edge[mid, 1] < 0.6
    # outward axis: density decreases with u at the edge
    assert edge[0, 1] > edge[-1, 1]
