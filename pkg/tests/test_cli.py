import json
import subprocess
import sys

import numpy as np
import pytest

from ergo.cli import main
from ergo.measure import Ensemble, load_bin, save_bin
from ergo.schedule import SigmaParams, TimeGrid, sigma_sequence

OU = {"family": "langevin", "drift": "ou", "k": 1.0, "sigma": 1.0}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, command, cfg, out="out", extra=()):
    code = main([command, "--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


def ou_cfg(**run):
    return {"model": OU, "init": {"kind": "gaussian", "mean": 3.0, "n": 2000},
            "grid": {"rule": "harmonic", "h": 0.5}, "run": {"seed": 1, "n_steps": 64, **run}}


def test_simulate_zero_steps_reproduces_input(tmp_path):
    ens = Ensemble(np.random.default_rng(0).normal(size=(300, 1)))
    save_bin(ens, tmp_path / "init.bin", p=2.0)
    cfg = {"model": OU, "init": {"kind": "file", "path": "init.bin"}, "grid": {"h": 0.5},
           "run": {"seed": 1, "n_steps": 0}}
    code, out = run(tmp_path, "simulate", cfg)
    assert code == 0
    assert (out / "checkpoints" / "ckpt_00000000.bin").read_bytes() == (tmp_path / "init.bin").read_bytes()
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 1 and man["version"].startswith("ergo ") and len(man["config_sha256"]) == 64


def test_simulate_twice_byte_identical(tmp_path):
    cfg = ou_cfg(checkpoints=[0, 8, 64])
    _, a = run(tmp_path, "simulate", cfg, "a")
    _, b = run(tmp_path, "simulate", cfg, "b", ("--workers", "4"))
    for name in ("checkpoints/ckpt_00000008.bin", "checkpoints/ckpt_00000064.bin", "report.csv", "verdict.json",
                 "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ens, p = load_bin(a / "checkpoints" / "ckpt_00000064.bin")
    assert ens.n == 2000 and p == 2.0


def test_checkpoint_beyond_steps_is_config_error(tmp_path, capsys):
    code, _ = run(tmp_path, "simulate", ou_cfg(checkpoints=[10, 100]))
    assert code == 2 and "run.checkpoints" in capsys.readouterr().err


@pytest.mark.parametrize("cfg,field", [
    ({"model": OU, "grid": {}, "run": {"n_steps": 1}, "init": {"kind": "point", "n": 1}}, "run.seed"),
    ({"model": {"family": "nope"}, "grid": {}, "run": {"seed": 0, "n_steps": 1}}, "model"),
    ({"model": OU, "grid": {"rule": "spiral"}, "run": {"seed": 0, "n_steps": 1}, "init": {"kind": "point", "n": 1}},
     "grid.rule"),
    ({"model": OU, "grid": {}, "run": {"seed": 0, "n_steps": 1}, "init": {"kind": "blob", "n": 1}}, "init.kind"),
])
def test_config_errors_name_the_field(tmp_path, capsys, cfg, field):
    code, _ = run(tmp_path, "simulate", cfg)
    assert code == 2 and field in capsys.readouterr().err


def test_step_cap_violation_exit_2(tmp_path):
    cfg = ou_cfg()
    cfg["model"] = {**OU, "step_cap": 0.1}
    assert run(tmp_path, "simulate", cfg)[0] == 2


def test_blowup_exit_3(tmp_path, capsys):
    cfg = {"model": {"family": "langevin", "drift": "affine", "A": [[10.0]], "sigma": 0.0},
           "init": {"kind": "point", "value": 1e300, "n": 3}, "grid": {"rule": "uniform", "gamma": 0.5},
           "run": {"seed": 0, "n_steps": 50}}
    code, _ = run(tmp_path, "simulate", cfg)
    err = capsys.readouterr().err
    assert code == 3 and "step" in err and "particle 0" in err


def test_rate_identity_is_starved(tmp_path):
    cfg = {"model": {"family": "identity"}, "init": {"kind": "gaussian", "n": 2000},
           "grid": {"h": 0.5}, "run": {"seed": 2, "n_steps": 256},
           "pipeline": {"reference": {"kind": "initial"}, "distance": "exact", "predicted": 1.0}}
    code, out = run(tmp_path, "rate", cfg)
    assert code == 4
    v = json.loads((out / "verdict.json").read_text())
    assert not v["passed"] and "bias floor" in v["reason"]


def test_rate_ou_and_log_flag(tmp_path):
    cfg = ou_cfg(n_steps=2048)
    cfg["init"] = {"kind": "gaussian", "mean": 10.0, "n": 20_000}
    cfg["pipeline"] = {"reference": {"kind": "ou", "k": 1.0, "sigma": 1.0}, "predicted": 1.0,
                       "log_corrected": True, "bias_seeds": 5}
    code, out = run(tmp_path, "rate", cfg)
    v = json.loads((out / "verdict.json").read_text())
    assert code == 0 and v["passed"]
    assert any("1 + ln(1 + n)" in s for s in v["notes"]) and v["clauses"]["rate"]["log_corrected"]
    header = (out / "report.csv").read_text().splitlines()[0]
    assert header == "n,t,distance_p,used"


def test_sigma_table_matches_schedule(tmp_path):
    cfg = {"grid": {"rule": "harmonic", "h": 0.5}, "pipeline": {"b": 1.0, "eps": 1.0, "n_max": 1000}}
    code, out = run(tmp_path, "sigma", cfg)
    v = json.loads((out / "verdict.json").read_text())
    assert code == (0 if v["passed"] else 1) and v["checks"]["a3"]["passed"]
    lines = (out / "report.csv").read_text().splitlines()
    assert lines[0] == "n,gamma_n,t_n,sigma,bound_shape,ratio" and len(lines) == 1001
    seq = sigma_sequence(TimeGrid.harmonic(0.5), SigmaParams(1.0, 1.0), 1000)
    for line in lines[1::97]:
        n, _, _, s, _, _ = line.split(",")
        assert float(s) == seq[int(n)]


def test_couple_ou_b_star(tmp_path):
    k = 1.5
    cfg = {"model": {**OU, "k": k}, "init": {"kind": "gaussian", "n": 2000},
           "run": {"seed": 3},
           "pipeline": {"init2": {"kind": "gaussian", "mean": 2.0, "n": 2000},
                        "gammas": [0.25, 0.125, 0.0625, 0.03125], "h": 0.5}}
    code, out = run(tmp_path, "couple", cfg)
    v = json.loads((out / "verdict.json").read_text())
    assert code == 0 and abs(v["estimate"]["b_star"] - 2 * k) < 0.05 * 2 * k
    assert "smallness" in v


def test_flmonitor_from_model_constants(tmp_path):
    cfg = ou_cfg(n_steps=500)
    cfg["pipeline"] = {}
    code, out = run(tmp_path, "flmonitor", cfg)
    assert code == 0
    assert (out / "report.csv").read_text().splitlines()[0] == "step,t,moment,bound,pass"
    cfg["model"] = {"family": "langevin", "drift": "affine", "A": [[1.0]]}
    cfg["pipeline"] = {"b_bar": 1.0, "C_bar": 1.0}
    assert run(tmp_path, "flmonitor", cfg, "bad")[0] == 1
    cfg["pipeline"] = {}
    assert run(tmp_path, "flmonitor", cfg, "bad2")[0] == 2


def test_wasserstein_self_is_zero(tmp_path, capsys):
    ens = Ensemble(np.random.default_rng(4).normal(size=(100, 3)))
    save_bin(ens, tmp_path / "a.bin")
    assert main(["wasserstein", str(tmp_path / "a.bin"), str(tmp_path / "a.bin")]) == 0
    assert float(capsys.readouterr().out) == 0.0
    assert main(["wasserstein", str(tmp_path / "a.bin"), str(tmp_path / "missing.bin")]) == 2


def test_env_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("ERGO_OUT", str(tmp_path / "envout"))
    monkeypatch.setenv("ERGO_WORKERS", "2")
    assert main(["simulate", "--config", write_cfg(tmp_path, ou_cfg(n_steps=4))]) == 0
    assert (tmp_path / "envout" / "manifest.json").exists()
    monkeypatch.setenv("ERGO_WORKERS", "many")
    assert main(["simulate", "--config", write_cfg(tmp_path, ou_cfg(n_steps=4))]) == 2


def test_seed_flag_overrides_config(tmp_path):
    _, a = run(tmp_path, "simulate", ou_cfg(n_steps=4), "a", ("--seed", "9"))
    man = json.loads((a / "manifest.json").read_text())
    assert man["seed"] == 9 and man["config"]["run"]["seed"] == 9


def test_console_entry_point(tmp_path):
    cfg = write_cfg(tmp_path, {"grid": {"h": 0.5}, "pipeline": {"b": 2.0, "eps": 1.0, "n_max": 5}})
    res = subprocess.run([sys.executable, "-m", "ergo.cli", "sigma", "--config", cfg, "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
