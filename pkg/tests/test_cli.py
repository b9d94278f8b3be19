import json
import os
import subprocess
import sys

import pytest

import helpers

PRESETS = os.path.join(os.path.dirname(__file__), os.pardir, "presets")


def run_cli(*args, env=None, cwd=None):
    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run(
        [sys.executable, "-m", "hjblab", *args],
        capture_output=True,
        text=True,
        env=full_env,
        cwd=cwd,
    )


def preset_path(name):
    return os.path.join(PRESETS, f"{name}.json")


def read_all_bytes(root):
    blobs = {}
    for dirpath, _, files in os.walk(root):
        for f in sorted(files):
            p = os.path.join(dirpath, f)
            with open(p, "rb") as handle:
                blobs[os.path.relpath(p, root)] = handle.read()
    return blobs


def test_validate_ok(tmp_path):
    out = tmp_path / "v"
    res = run_cli("validate", preset_path("smoothA"), "--out", str(out))
    assert res.returncode == 0, res.stderr
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] is True
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "validate"
    assert len(manifest["config_sha256"]) == 64


def test_validate_failure_exits_one(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps(helpers.sigma_one_config()))
    out = tmp_path / "v"
    res = run_cli("validate", str(cfg), "--out", str(out))
    assert res.returncode == 1
    assert json.loads((out / "report.json").read_text())["passed"] is False


def test_missing_config_exits_two_without_output(tmp_path):
    out = tmp_path / "never"
    res = run_cli("validate", str(tmp_path / "absent.json"), "--out", str(out))
    assert res.returncode == 2
    assert res.stderr.strip()
    assert not out.exists()


def test_bad_flag_exits_two():
    res = run_cli("certify", preset_path("smoothA"))
    assert res.returncode == 2


def test_bad_threads_env_exits_two(tmp_path):
    out = tmp_path / "never"
    res = run_cli("validate", preset_path("smoothA"), "--out", str(out),
                  env={"HJB_THREADS": "many"})
    assert res.returncode == 2
    assert not out.exists()


def test_certify_lyapunov(tmp_path):
    out = tmp_path / "c"
    res = run_cli("certify", preset_path("smoothA"), "--family", "lyapunov",
                  "--param", "1.0", "--M", "10", "--out", str(out))
    assert res.returncode == 0, res.stderr
    cert = json.loads((out / "certificate.json").read_text())
    assert abs(cert["delta"] - 0.19) < 0.02
    assert cert["margin"] <= 0.0


def test_certify_failure_exits_one(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps(helpers.sigma_one_config()))
    res = run_cli("certify", str(cfg), "--family", "lyapunov", "--param", "1.0",
                  "--M", "1.0", "--out", str(tmp_path / "c"))
    assert res.returncode == 1


def test_certify_rho_out_of_range_exits_two(tmp_path):
    res = run_cli("certify", preset_path("degenerateB"), "--family", "barrier",
                  "--param", "0.6", "--M", "1.0", "--out", str(tmp_path / "c"))
    assert res.returncode == 2


def test_solve_outputs(tmp_path):
    out = tmp_path / "s"
    res = run_cli("solve", preset_path("smoothA"), "--h", "0.01", "--T", "0.1",
                  "--mode", "explicit", "--snap", "0.05", "--out", str(out))
    assert res.returncode == 0, res.stderr
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["times"] == [0.0, 0.05, 0.1]
    assert (out / "snap_000002.csv").read_text().splitlines()[0] == "x1,value"
    stencil = json.loads((out / "stencil.json").read_text())
    assert stencil["exterior_reference_count"] == 0


def test_ergodic_constant(tmp_path):
    out = tmp_path / "e"
    res = run_cli("ergodic", preset_path("constantL"), "--method", "rvi",
                  "--h", "0.01", "--out", str(out))
    assert res.returncode == 0, res.stderr
    blob = json.loads((out / "ergodic.json").read_text())
    assert abs(blob["c"] + 2.0) < 1e-9
    assert blob["chi_sup"] < 1e-9


def test_ergodic_longtime_cli(tmp_path):
    out = tmp_path / "e"
    res = run_cli("ergodic", preset_path("constantL"), "--method", "longtime",
                  "--h", "0.01", "--tol", "1e-7", "--out", str(out))
    assert res.returncode == 0, res.stderr
    assert abs(json.loads((out / "ergodic.json").read_text())["c"] + 2.0) < 1e-6


def test_converge_smoke(tmp_path):
    out = tmp_path / "k"
    res = run_cli("converge", preset_path("smoothA"), "--h", "0.01", "--u0", "zero",
                  "--tol", "1e-3", "--out", str(out))
    assert res.returncode == 0, res.stderr
    rep = json.loads((out / "convergence.json").read_text())
    assert rep["uniform_error"][-1] < 1e-3
    assert (out / "curves.csv").read_text().startswith("t,inf_gap,sup_gap,uniform_error")


def test_holder_smoke(tmp_path):
    out = tmp_path / "h"
    res = run_cli("holder", preset_path("degenerateB"), "--h", "0.002", "--side", "left",
                  "--fit-min", "0.02", "--fit-max", "0.1", "--out", str(out))
    assert res.returncode == 0, res.stderr
    fit = json.loads((out / "holder.json").read_text())
    assert 0.3 < fit["uncapped_slope"] < 0.95


def test_envelope_smoke(tmp_path):
    out = tmp_path / "n"
    res = run_cli("envelope", preset_path("smoothA"), "--h", "0.002", "--rho", "0.4",
                  "--delta", "0.1", "--out", str(out))
    assert res.returncode == 0, res.stderr
    rep = json.loads((out / "envelope.json").read_text())
    assert rep["lower_violation"] <= 2e-2 and rep["upper_violation"] <= 2e-2


def test_flag_overrides_config_h(tmp_path):
    out = tmp_path / "e"
    res = run_cli("ergodic", preset_path("constantL"), "--method", "rvi",
                  "--h", "0.02", "--out", str(out))
    assert res.returncode == 0
    assert json.loads((out / "manifest.json").read_text())["h"] == 0.02


@pytest.mark.parametrize("threads", ["1", "4"])
def test_determinism_across_runs(tmp_path, threads):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / f"{threads}-{tag}"
        res = run_cli("ergodic", preset_path("constantL"), "--method", "rvi",
                      "--h", "0.01", "--out", str(out), env={"HJB_THREADS": threads})
        assert res.returncode == 0
        outs.append(read_all_bytes(out))
    assert outs[0] == outs[1]
