import json
from pathlib import Path

import numpy as np
import pytest

from latwave import cli
from latwave.config import ConfigError, load, loads
from latwave.output import read_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = """
[model]
name = host_vector
a = 0.5
b = 1.0
[problem]
tau = 1.0
"""


@pytest.mark.parametrize("extra, needle", [
    ("[bogus]\nx = 1\n", "unknown section [bogus]"),
    ("[numerics]\nstep = 0.1\n", "[numerics] unknown key 'step'"),
    ("[numerics]\nm = ten\n", "[numerics] m"),
    ("[numerics]\nbackend = fortran\n", "backend"),
    ("[stability]\nfit_t0 = 50\nfit_t1 = 10\n", "fit_t1"),
    ("[kernel]\ntype = gaussian\n", None),
])
def test_strict_errors(extra, needle):
    if needle is None:
        with pytest.raises(ConfigError, match="alpha is required"):
            loads(BASE + extra).build_problem()
        return
    with pytest.raises(ConfigError) as ei:
        loads(BASE + extra, "t.cfg")
    assert needle in str(ei.value)


def test_model_key_and_duplicates():
    with pytest.raises(ConfigError, match="unknown key 'gamma'"):
        loads(BASE.replace("b = 1.0", "b = 1.0\ngamma = 2"))
    with pytest.raises(ConfigError, match="line"):
        loads(BASE.replace("b = 1.0", "b = 1.0\nb = 2.0"))
    with pytest.raises(ConfigError, match="unknown model"):
        loads("[model]\nname = logistic\n")


def test_round_trip_and_speeds():
    cfg = load(CONFIGS / "below_cstar.cfg")
    again = loads(cfg.dumps())
    assert again.effective() == cfg.effective()
    sp = cfg["stability"]["c"]
    assert sp.relative and sp.resolve(2.0) == pytest.approx(2.0 + sp.offset)
    assert loads(BASE + "[profile]\nc = 1.75\n")["profile"]["c"].resolve(9.0) == 1.75


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.cfg")))
def test_shipped_configs_load(name):
    load(CONFIGS / name).build_problem()


def test_cli_exit_codes(tmp_path, capsys):
    cfg = CONFIGS / "host_vector.cfg"
    assert cli.run(["selfcheck"]) == 0
    out = tmp_path / "a"
    assert cli.run(["analyze", "--config", str(cfg), "--out", str(out)]) == 0
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["command"] == "analyze" and "config" in meta
    # second run into a non-empty directory collides
    assert cli.run(["analyze", "--config", str(cfg), "--out", str(out)]) == 2
    assert cli.run(["analyze", "--config", str(cfg), "--out", str(out), "--force"]) == 0
    bad = tmp_path / "bad.cfg"
    bad.write_text(BASE + "[numerics]\nm = -1\n")
    assert cli.run(["analyze", "--config", str(bad), "--out", str(tmp_path / "b")]) == 2
    err = capsys.readouterr().err
    assert "[numerics] m" in err


def test_cli_below_cstar(tmp_path, capsys):
    code = cli.run(["stability", "--config", str(CONFIGS / "below_cstar.cfg"), "--out", str(tmp_path / "p")])
    assert code == 2
    assert "below the minimal speed" in capsys.readouterr().err


def test_cli_deterministic(tmp_path):
    cfg = CONFIGS / "host_vector.cfg"
    for tag in ("x", "y"):
        assert cli.run(["simulate", "--config", str(cfg), "--out", str(tmp_path / tag)]) == 0
    a = (tmp_path / "x" / "norms.csv").read_bytes()
    b = (tmp_path / "y" / "norms.csv").read_bytes()
    assert a == b
    norms = read_csv(tmp_path / "x" / "norms.csv")
    assert np.all(np.isfinite(norms["t"]))


def test_cli_green(tmp_path):
    assert cli.run(["green", "--config", str(CONFIGS / "host_vector.cfg"), "--out", str(tmp_path / "g")]) == 0
    for f in ("delayed_exp.csv", "heat_kernel.csv", "fourier.csv", "summary.txt"):
        assert (tmp_path / "g" / f).exists()
