import hashlib
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from ymlab import cli

FAST_KATO = ["--set", "fuzz_pairs_count=2000", "--set", "kato_points_count=50"]


def _run(tmp_path, name, *args):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, out


def _files(out: Path):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "timing.json"}


# ------------------------------------------------------------------- config


def test_config_defaults_and_text_parsing():
    cfg = cli.RunConfig.from_text("# comment\nn = 6\ngrid_K_nodes = 128  # trailing\n\n")
    assert cfg["n"] == 6 and cfg["grid_K_nodes"] == 128 and cfg["grid_R_max_y"] == 20.0
    cfg.validate()
    assert "out_dir" not in cfg.canonical_text()
    assert len(cfg.hash()) == 64


@pytest.mark.parametrize("text", ["bogus_key = 1", "n 5", "grid_K_nodes = 1.5", "grid_R_max_y = abc"])
def test_config_parse_errors(text):
    with pytest.raises(cli.ConfigError):
        cli.RunConfig.from_text(text)


@pytest.mark.parametrize("key, value", [
    ("n", "10"), ("n", "4"), ("grid_K_nodes", "32"), ("grid_R_max_y", "10"),
    ("flow_tol_rel", "0"), ("picard_tol_rel", "-1e-9"), ("cert_R_list_y", "10,-5"),
    ("flow_fit_window_simtime", "5,2"), ("inject_corrupt_constant_flag", "2"),
])
def test_config_validation_rejects(key, value):
    cfg = cli.RunConfig()
    cfg.set(key, value)
    with pytest.raises(cli.ConfigError):
        cfg.validate()


def test_config_hash_ignores_output_dir():
    a, b = cli.RunConfig(), cli.RunConfig()
    b.set("out_dir", "/somewhere/else")
    assert a.hash() == b.hash()
    b.set("seed", 1)
    assert a.hash() != b.hash()


def test_config_file_flag(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("n = 5\ncert_R_list_y = 10,20\n")
    code, out = _run(tmp_path, "c", "certify-nonequivariant", "--config", str(path))
    assert code == 0
    assert json.loads((out / "manifest.json").read_text())["config"]["cert_R_list_y"] == "10,20"


# --------------------------------------------------------------- exit codes


def test_exit_code_config_errors(tmp_path):
    assert cli.main(["verify-identities", "--n", "10", "--out", str(tmp_path / "x")]) == 2
    assert not (tmp_path / "x").exists()
    assert cli.main(["spectrum", "--set", "nonsense=1", "--out", str(tmp_path / "y")]) == 2
    assert cli.main(["spectrum", "--set", "novalue"]) == 2
    assert cli.main(["spectrum", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert cli.main(["no-such-command"]) == 2


def test_verify_identities_and_negative_control(tmp_path):
    code, out = _run(tmp_path, "ok", "verify-identities", "--set", "identity_points_count=20")
    man = json.loads((out / "manifest.json").read_text())
    assert code == 0 and man["passed"] and len(man["suites"]) == 6
    code, out = _run(tmp_path, "bad", "verify-identities", "--set", "identity_points_count=20",
                     "--corrupt-constant")
    man = json.loads((out / "manifest.json").read_text())
    assert code == 1 and not man["suites"]["soliton_residual"]


# -------------------------------------------------------- outputs and replay


def test_outputs_schema_and_manifest(tmp_path):
    code, out = _run(tmp_path, "s", "spectrum")
    assert code == 0
    csv = (out / "spectrum.csv").read_text().splitlines()
    assert csv[0] == "# schema_version: 1"
    assert csv[1].split(",")[:2] == ["j", "lambda_j"]
    man = json.loads((out / "manifest.json").read_text())
    for name, digest in man["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert "wall_time_s" in json.loads((out / "timing.json").read_text())
    assert "wall_time" not in json.dumps(man["config"])
    plot = (out / "plot_spectrum.py").read_text()
    compile(plot, "plot_spectrum.py", "exec")
    assert "spectrum.csv" in plot


def test_determinism_across_output_dirs(tmp_path):
    a = _run(tmp_path, "a", "kato-fuzz", *FAST_KATO, "--seed", "7")
    b = _run(tmp_path, "b", "kato-fuzz", *FAST_KATO, "--seed", "7")
    assert a[0] == b[0] == 0
    assert _files(a[1]) == _files(b[1])
    c = _run(tmp_path, "c", "kato-fuzz", *FAST_KATO, "--seed", "8")
    assert _files(c[1])["kato_fuzz.csv"] != _files(a[1])["kato_fuzz.csv"]


def test_replay_reproduces_run(tmp_path):
    code, out = _run(tmp_path, "orig", "certify-nonequivariant")
    assert code == 0
    replay = tmp_path / "replay"
    assert cli.main(["replay", str(out / "manifest.json"), "--out", str(replay)]) == 0
    assert _files(out) == _files(replay)


def test_replay_rejects_bad_manifest(tmp_path):
    bad = tmp_path / "manifest.json"
    bad.write_text(json.dumps({"command": "nope", "config": {}}))
    assert cli.main(["replay", str(bad)]) == 2
    bad.write_text("not json")
    assert cli.main(["replay", str(bad)]) == 2


def test_picard_command_contracts(tmp_path):
    code, out = _run(tmp_path, "p", "picard", "--set", "picard_eps_list_amplitude=1e-3")
    summary = json.loads((out / "picard.json").read_text())
    assert code == 0
    assert "eps" in (out / "picard.csv").read_text().splitlines()[1].split(",")
    assert 0 < summary["contraction_factor"] < 1
    assert summary["runs"][0]["converged"]


def test_thread_env_var(tmp_path):
    env = dict(os.environ, YMLAB_NUM_THREADS="abc")
    cmd = [sys.executable, "-m", "ymlab", "certify-nonequivariant", "--out", str(tmp_path / "t")]
    assert subprocess.run(cmd, env=env, capture_output=True).returncode == 2
    env["YMLAB_NUM_THREADS"] = "1"
    assert subprocess.run(cmd, env=env, capture_output=True).returncode == 0
