import hashlib
import json

import numpy as np
import pytest

from slipball import cli
from slipball.dynamics import InstabilityError
from slipball.operators import EigenSolverError

SMALL = """
[discretization]
l_max = 2
n_max = 1

[physics]
nu = 0.1
alpha = {alpha}

[run]
initial = random
energy = 1.0
seed = 3
dt = 2e-3
T = {T}
cadence = 5
target = {target}
"""


def small_config(tmp_path, alpha="0", T="0.2", target="none", extra=""):
    p = tmp_path / "small.ini"
    p.write_text(SMALL.format(alpha=alpha, T=T, target=target) + extra)
    return str(p)


def run(args):
    return cli.main(args)


def read_kv(path):
    out = {}
    for line in path.read_text().splitlines():
        k, v = line.split(" = ", 1)
        out[k] = v
    return out


def check_manifest(out):
    m = json.loads((out / "manifest.json").read_text())
    for name, digest in m["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    listed = {f for c in m["commands"].values() for f in c["files"]}
    assert listed == set(m["files"])
    return m


# -- geometry ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "name,dim", [("ball_geometry", 3), ("spheroid_geometry", 1), ("triaxial_geometry", 0), ("revolution_geometry", 1)]
)
def test_geometry_command(golden, name, dim):
    code, out = golden.run(name, "geometry")
    assert code == 0
    rep = read_kv(out / "geometry_report.txt")
    assert int(rep["ker_s_dimension"]) == dim
    if dim == 1:
        assert "e+00" in rep["axis"]
    check_manifest(out)


def test_geometry_failure_exit_code(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[geometry]\nkind = ellipsoid\nsemi_axes = 1, -1, 2\n")
    assert run(["geometry", "--config", str(p), "--out", str(tmp_path / "o")]) == 3
    p.write_text("[geometry]\nkind = revolution\nprofile = 1 + 0*z\n")
    assert run(["geometry", "--config", str(p), "--out", str(tmp_path / "o")]) == 3


# -- config errors -----------------------------------------------------------------------


def test_misspelled_key_exit_2(tmp_path, capsys):
    p = tmp_path / "typo.ini"
    p.write_text("[run]\nfinal_time = 3\n")
    assert run(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "final_time" in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert run(["spectrum", "--config", str(tmp_path / "nope.ini")]) == 2


def test_unusable_arguments_exit_2():
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate"])
    assert exc.value.code == 2


# -- spectrum ------------------------------------------------------------------------------


def test_spectrum_zero_friction(tmp_path):
    out = tmp_path / "spec0"
    assert run(["spectrum", "--config", small_config(tmp_path), "--out", str(out), "--plot"]) == 0
    rows = (out / "spectrum.csv").read_text().splitlines()
    assert rows[0] == "index,eigenvalue,null"
    assert sum(r.endswith(",1") for r in rows[1:]) == 3
    c = read_kv(out / "constants.txt")
    assert float(c["mu1"]) > 0 and float(c["C"]) == pytest.approx(1 / np.sqrt(float(c["mu1"])))
    assert (out / "spectrum.svg").read_text().startswith("<?xml")
    check_manifest(out)


def test_spectrum_unit_friction_and_refinement(tmp_path):
    out = tmp_path / "spec1"
    cfg = small_config(tmp_path, alpha="1")
    text = open(cfg).read().replace("n_max = 1", "n_max = 1\nrefine_check = next")
    open(cfg, "w").write(text)
    assert run(["spectrum", "--config", cfg, "--out", str(out)]) == 0
    c = read_kv(out / "constants.txt")
    assert float(c["sigma1"]) > 0 and int(c["null_count"]) == 0
    assert float(c["eta"]) == pytest.approx(0.5, abs=1e-12)
    assert float(c["mu1_drift"]) < 1e-8


def test_spectrum_refine_check(golden):
    code, out = golden.run("variable_friction", "spectrum")
    assert code == 0
    c = read_kv(out / "constants.txt")
    assert float(c["mu1_drift"]) <= 0.05
    assert float(c["min_alpha"]) >= 0.5


def test_spectrum_needs_ball(golden):
    code, _ = golden.run("spheroid_geometry", "spectrum")
    assert code == 3


def test_eigensolver_failure_exit_4(tmp_path, monkeypatch):
    import slipball.operators as ops

    def boom(*a, **k):
        raise EigenSolverError("no convergence")

    monkeypatch.setattr(ops, "solve_stokes_eigenproblem", boom)
    out = tmp_path / "o"
    assert run(["spectrum", "--config", small_config(tmp_path), "--out", str(out)]) == 4
    assert "no convergence" in json.loads((out / "manifest.json").read_text())["commands"]["spectrum"]["errors"][0]


# -- simulate ------------------------------------------------------------------------------------


def test_simulate_reproducible_and_manifest(tmp_path):
    digests = []
    for n in range(2):
        out = tmp_path / f"r{n}"
        assert run(["simulate", "--config", small_config(tmp_path), "--out", str(out), "--plot"]) == 0
        digests.append(json.loads((out / "manifest.json").read_text())["files"])
        check_manifest(out)
    assert digests[0] == digests[1]
    assert {"timeseries.csv", "summary.txt", "decay.svg"} <= set(digests[0])


def test_seed_override_changes_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(["simulate", "--config", small_config(tmp_path), "--out", str(a)])
    run(["--seed", "123", "simulate", "--config", small_config(tmp_path), "--out", str(b)])
    assert (a / "timeseries.csv").read_bytes() != (b / "timeseries.csv").read_bytes()
    m = json.loads((b / "manifest.json").read_text())
    assert m["commands"]["simulate"]["config"]["run"]["seed"] == "123"


def test_decay_failure_exit_5(tmp_path):
    # zero friction, rigid component present, decay to zero requested: cannot decay
    out = tmp_path / "fail"
    assert run(["simulate", "--config", small_config(tmp_path, T="1.0", target="zero"), "--out", str(out)]) == 5
    assert "FAIL" in read_kv(out / "summary.txt")["decay_verdict"]


def test_instability_exit_6(tmp_path, monkeypatch):
    def unstable(*a, **k):
        raise InstabilityError("energy grew")

    monkeypatch.setattr(cli, "integrate", unstable)
    out = tmp_path / "o"
    assert run(["simulate", "--config", small_config(tmp_path), "--out", str(out)]) == 6
    assert json.loads((out / "manifest.json").read_text())["commands"]["simulate"]["exit_code"] == 6


def test_stability_guard_exit_2(tmp_path):
    cfg = small_config(tmp_path)
    text = open(cfg).read().replace("dt = 2e-3", "dt = 0.5")
    open(cfg, "w").write(text)
    assert run(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_rigid_rotation_steady(golden):
    code, out = golden.run("rigid_rotation_steady")
    assert code == 0
    s = read_kv(out / "summary.txt")
    assert float(s["state_drift"]) <= 1e-8 and float(s["pairing_drift"]) <= 1e-8


def test_decay_to_projection(golden):
    code, out = golden.run("decay_to_projection")
    assert code == 0
    s = read_kv(out / "summary.txt")
    assert s["decay_verdict"] == "PASS" and s["decay_target"] == "kernel"
    m = check_manifest(out)
    c = m["commands"]["simulate"]["constants"]
    assert c["predicted_rate"] == pytest.approx(4 * 0.1 * c["mu1"])


def test_positive_friction(golden):
    code, out = golden.run("positive_friction")
    assert code == 0
    s = read_kv(out / "summary.txt")
    assert s["decay_verdict"] == "PASS" and s["convex_ok"] == "true"


# -- verify ------------------------------------------------------------------------------------------


def write_series(path, t, y, column="E_dev"):
    path.write_text(f"t,{column}\n" + "".join(f"{a:.16e},{b:.16e}\n" for a, b in zip(t, y)))
    return str(path)


def test_verify_synthetic_exponential(tmp_path):
    t = np.arange(0, 4.0001, 1e-3)
    s = write_series(tmp_path / "exp.csv", t, 3 * np.exp(-0.7 * t))
    assert run(["verify", s, "--K", "0.7", "--out", str(tmp_path / "v"), "--plot"]) == 0
    lines = (tmp_path / "v" / "gronwall.csv").read_text().splitlines()
    assert float(lines[1].split(",")[0]) == pytest.approx(0.7) and ",true,true," in lines[1]
    assert (tmp_path / "v" / "gronwall.svg").is_file()


def test_verify_constant_fails_hypothesis(tmp_path):
    t = np.linspace(0, 1, 21)
    s = write_series(tmp_path / "c.csv", t, np.ones_like(t))
    assert run(["verify", s, "--K", "1", "--out", str(tmp_path / "v")]) == 7


def test_verify_staircase_fails_bound(tmp_path):
    t = 0.1 * np.arange(31)
    s = write_series(tmp_path / "st.csv", t, 1.2 ** -np.arange(31.0))
    assert run(["verify", s, "--K", "2", "--rule", "right", "--out", str(tmp_path / "v")]) == 8


def test_verify_without_rate_exit_2(tmp_path):
    s = write_series(tmp_path / "e.csv", [0, 1], [1, 0.5])
    assert run(["verify", s, "--out", str(tmp_path / "v")]) == 2
    assert run(["verify", str(tmp_path / "missing.csv"), "--K", "1"]) == 2
    assert run(["verify", s, "--K", "1", "--column", "nope", "--out", str(tmp_path / "v")]) == 2


def test_verify_end_to_end(golden):
    code, out = golden.run("decay_to_projection")
    assert code == 0
    assert cli.main(["verify", "--config", "decay_to_projection", "--out", str(out)]) == 0
    rep = read_kv(out / "gronwall_report.txt")
    m = check_manifest(out)
    assert float(rep["K"]) == pytest.approx(m["commands"]["simulate"]["constants"]["predicted_rate"])
    assert "verify" in m["commands"] and "simulate" in m["commands"]
