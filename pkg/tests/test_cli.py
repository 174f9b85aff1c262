import json
import os
import subprocess
import sys

import pytest

from hypb.cli import config_hash, main, resolve_config
from hypb.table import Table


def read(d, name):
    with open(os.path.join(d, name), "rb") as f:
        return f.read()


def load(d, name):
    return json.loads(read(d, name))


def structured(d):
    """Every output file except the timestamped sidecars."""
    return {n: read(d, n) for n in sorted(os.listdir(d)) if not n.endswith(".meta.json")}


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    d = tmp_path_factory.mktemp("build")
    assert main(["build", "--family", "optimal", "--kd", "-1", "--kf", "0.1", "--out", str(d)]) == 0
    return d


def test_build_outputs(built):
    assert {"table.json", "table.svg", "certificate.json", "build.meta.json"} <= set(os.listdir(built))
    cert = load(built, "certificate.json")
    tab = load(built, "table.json")
    assert cert["ok"] and cert["certificate"]["c1_ok"]
    t = Table.from_dict(tab["table"])
    assert tab["table_hash"] == cert["table_hash"] == t.content_hash()
    assert tab["config_hash"] == cert["config_hash"]
    assert read(built, "table.svg").startswith(b"<svg")
    meta = load(built, "build.meta.json")
    assert "timestamp" in meta and meta["config_hash"] == tab["config_hash"]
    assert oct(os.stat(os.path.join(built, "table.json")).st_mode & 0o777) == "0o644"


def test_build_rerun_is_byte_identical(built, tmp_path):
    assert main(["build", "--family", "optimal", "--kd", "-1", "--kf", "0.1", "--out", str(tmp_path),
                 "--threads", "2"]) == 0
    assert structured(tmp_path) == structured(built)


def test_build_certificate_failure(tmp_path):
    rc = main(["build", "--family", "main", "--kd", "-1", "--kf", "0.1", "--h", str(0.5 * 0.39656), "--l", "10",
               "--out", str(tmp_path)])
    assert rc == 2
    cert = load(tmp_path, "certificate.json")
    assert not cert["ok"] and not cert["certificate"]["c1_ok"]
    assert cert["certificate"]["c1_witness"] is not None and cert["certificate"]["c1_margin"] < 0


def test_build_spiral_rounds(tmp_path):
    rc = main(["build", "--family", "spiral", "--kd", "-1", "--kf", "0.01", "--r0", "5", "--out", str(tmp_path)])
    assert rc == 0
    cert = load(tmp_path, "certificate.json")["certificate"]
    assert cert["spiral_params"]["M"] == 4 and cert["spiral_ok"]


def test_verify_cones_pass_and_determinism(built, tmp_path):
    args = ["verify-cones", "--table", str(built / "table.json"), "--orbits", "200", "--steps", "200",
            "--seed", "4"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b), "--threads", "2"]) == 0
    assert structured(a) == structured(b)
    s = load(a, "survey.json")
    assert s["survey"]["n_violations"] == 0 and s["survey"]["passed"]
    assert s["table_hash"] == load(built, "table.json")["table_hash"]


def test_verify_cones_negative_control(tmp_path):
    rc = main(["verify-cones", "--family", "main", "--kd", "-1", "--kf", "0.1", "--h", str(0.5 * 0.39656),
               "--l", "10", "--orbits", "300", "--steps", "300", "--seed", "1", "--out", str(tmp_path)])
    assert rc == 3
    v = load(tmp_path, "survey.json")["survey"]["violations"]
    assert v and {"x0", "seed", "step", "case", "margin"} <= set(v[0])


def test_lyapunov_exit_codes(built, tmp_path):
    sq = tmp_path / "sq"
    rc = main(["lyapunov", "--family", "square", "--orbits", "50", "--steps", "2000", "--expect-positive",
               "--out", str(sq)])
    assert rc == 5
    opt = tmp_path / "opt"
    rc = main(["lyapunov", "--table", str(built / "table.json"), "--orbits", "50", "--steps", "2000",
               "--expect-positive", "--out", str(opt)])
    assert rc == 0
    d = load(opt, "lyapunov.json")
    assert d["lyapunov"]["ci_excludes_zero"] and d["lyapunov"]["mean"] > 0
    lines = read(opt, "lyapunov.csv").decode().splitlines()
    assert lines[0] == f"# config_hash={d['config_hash']} table_hash={d['table_hash']}"
    assert lines[1] == "seed,s0,alpha0,n_effective,lambda_hat"
    assert len(lines) == 52


def test_config_file_and_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "orbits": 10, "steps": 20, "family": "square"}))
    out = tmp_path / "o"
    assert main(["lyapunov", "--config", str(cfg), "--seed", "6", "--out", str(out)]) == 0
    c = load(out, "lyapunov.json")["config"]
    assert c["seed"] == 6 and c["orbits"] == 10 and c["steps"] == 20 and c["family"] == "square"


def test_config_hash_ignores_output_location():
    a = resolve_config(["lyapunov", "--out", "/tmp/x", "--threads", "3"])
    b = resolve_config(["lyapunov", "--out", "/tmp/y"])
    c = resolve_config(["lyapunov", "--seed", "1"])
    assert config_hash(a) == config_hash(b) != config_hash(c)


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("HYPB_THREADS", "3")
    assert resolve_config(["lyapunov"])["threads"] == 3
    assert resolve_config(["lyapunov", "--threads", "2"])["threads"] == 2


def test_orbit_dump_and_export(built, tmp_path):
    args = ["orbit-dump", "--table", str(built / "table.json"), "--steps", "50", "--seed", "3",
            "--orbit-index", "2"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert structured(a) == structured(b)
    lines = read(a, "orbit.csv").decode().splitlines()
    assert lines[1] == "step,s,alpha,tau,piece_label,n_flat_hits"
    assert len(lines) == 2 + 51
    svg = tmp_path / "svg"
    assert main(["export-svg", "--table", str(built / "table.json"), "--trajectory-steps", "40",
                 "--out", str(svg)]) == 0
    text = read(svg, "table.svg").decode()
    assert 'class="trajectory"' in text


def test_scaling_study(tmp_path):
    assert main(["scaling-study", "--kf-list", "0.1", "--out", str(tmp_path)]) == 0
    rows = load(tmp_path, "study.json")["rows"]
    assert len(rows) == 1 and rows[0]["h_o"] == pytest.approx(0.39656, rel=1e-4)
    for name in ("study.csv", "h_o.svg", "area.svg", "diameter.svg", "spiral_counts.svg", "spiral_constants.svg"):
        assert os.path.getsize(tmp_path / name) > 0
    with pytest.raises(SystemExit):
        main(["scaling-study", "--kf-list", "0.01,0.1", "--out", str(tmp_path)])


def test_console_script():
    r = subprocess.run([sys.executable, "-m", "hypb.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("build", "verify-cones", "lyapunov", "scaling-study", "export-svg", "orbit-dump"):
        assert cmd in r.stdout
