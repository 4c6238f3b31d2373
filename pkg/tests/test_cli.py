import json
import math

import numpy as np
import pytest

import sl2lab.grid
from sl2lab import cli
from sl2lab import io as sio


def run(tmp_path, name, *args):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, out


def load(path):
    return json.loads(path.read_text())


# ------------------------------------------------------------------ configuration

def test_unknown_key_is_rejected(tmp_path, capsys):
    code, _ = run(tmp_path, "o", "flow", "--set", "bogus=1")
    assert code == 2
    assert "field 'bogus'" in capsys.readouterr().err


@pytest.mark.parametrize("args,field", [
    (["flow", "--n", "2"], "n"),
    (["flow", "--set", "init=sideways"], "init"),
    (["flow", "--set", "scenario=cs-gradient", "--set", "init=eigenmode"], "init"),
    (["flow", "--set", "dt=1", "--set", "T=0.1"], "dt"),
    (["frequency-profile", "--n", "16"], "n"),
    (["lm-check", "--set", "greens_n=64"], "greens_n"),
    (["gauge-fix", "--dim", "2"], "dim"),
    (["gauge-fix", "--n", "8"], "n"),
    (["verify-identities", "--set", "band_lm=2,1"], "band_lm"),
    (["zform", "--set", "scenario=sphere"], "scenario"),
    (["zform", "--seed", "-1"], "seed"),
])
def test_bad_values_name_the_field(tmp_path, capsys, args, field):
    code, out = run(tmp_path, "o", *args)
    assert code == 2
    assert f"field '{field}'" in capsys.readouterr().err
    assert not out.exists()  # rejected before any compute


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# heat run\nn = 8\nT = 0.002\ninit = zero\n")
    code, out = run(tmp_path, "o", "flow", "--config", str(cfg), "--set", "T=0.001")
    assert code == 0
    summary = load(out / "flow_summary.json")
    assert summary["init"] == "zero"
    _, cols, arr = sio.read_csv(out / "history.csv")
    assert arr[-1, 0] == pytest.approx(0.001)


def test_json_config_file(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"n": 8, "init": "zero", "T": 0.001}))
    code, out = run(tmp_path, "o", "flow", "--config", str(cfg))
    assert code == 0 and (out / "history.csv").exists()


def test_missing_config_file(tmp_path, capsys):
    code, _ = run(tmp_path, "o", "flow", "--config", str(tmp_path / "nope.cfg"))
    assert code == 2 and "--config" in capsys.readouterr().err


def test_out_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["flow", "--n", "8", "--set", "init=zero", "--set", "T=0.001"]) == 0
    assert (tmp_path / "env" / "history.csv").exists()


# ------------------------------------------------------------------ subcommands

def test_verify_identities_small(tmp_path):
    code, out = run(tmp_path, "o", "verify-identities", "--n", "8", "--set", "trials=2")
    doc = load(out / "identities.json")
    assert set(doc["identities"]) == {"bochner", "adjointness", "lm_square"}
    assert doc["identities"]["adjointness"]["passed"]
    assert doc["identities"]["lm_square"]["passed"]
    assert code == (0 if doc["passed"] else 1)


def test_broken_stencil_fails(tmp_path, monkeypatch):
    original = sl2lab.grid.coder

    def broken(w):
        out = original(w)
        out.data *= 1.01
        return out

    monkeypatch.setattr(sl2lab.grid, "coder", broken)
    code, out = run(tmp_path, "o", "verify-identities", "--n", "8", "--set", "trials=1")
    assert code == 1
    assert not load(out / "identities.json")["identities"]["adjointness"]["passed"]


def test_heat_eigenmode_decay(tmp_path):  # [DERIVED] lattice eigenvalue 4 sin^2(pi h / L) / h^2
    code, out = run(tmp_path, "o", "flow", "--n", "16")
    s = load(out / "flow_summary.json")
    assert code == 0
    h = 1 / 16
    assert s["lambda_h"] == pytest.approx(4 * math.sin(math.pi * h) ** 2 / h ** 2)
    assert abs(s["decay_constant"] - s["lambda_h"]) <= 0.01 * s["lambda_h"]
    assert s["energy_monotone"] and s["norm_monotone"]


def test_zero_data_gives_zero_columns(tmp_path):  # [TRIVIAL]
    for scen in ("heat", "cs-gradient"):
        code, out = run(tmp_path, scen, "flow", "--n", "8", "--set", f"scenario={scen}",
                        "--set", "init=zero", "--set", "T=0.01")
        assert code == 0
        _, cols, arr = sio.read_csv(out / "history.csv")
        assert cols[0] == "t" and np.all(arr[:, 1:] == 0)


def test_cs_gradient_history(tmp_path):
    code, out = run(tmp_path, "o", "flow", "--n", "8", "--set", "scenario=cs-gradient", "--set", "T=0.2")
    assert code == 0
    _, cols, arr = sio.read_csv(out / "history.csv")
    re_cs = arr[:, cols.index("re_cs")]
    s = load(out / "flow_summary.json")
    assert s["re_cs_monotone"]
    assert np.all(np.diff(re_cs) <= 1e-12 * s["cs_scale"])
    assert abs(s["im_cs_drift"]) <= 0.05


def test_frequency_profile(tmp_path):
    code, out = run(tmp_path, "o", "frequency-profile", "--n", "64", "--set", "k=2")
    assert code == 0
    header, cols, arr = sio.read_csv(out / "profile.csv")
    assert cols == ["r", "h", "H", "N"] and header[0].startswith("sl2lab ")
    s = load(out / "summary.json")
    assert s["N0_snapped"] == 1.0 and s["residual"] <= 0.02
    for key in ("N0_estimate", "monotonicity_violation"):
        assert key in s


def test_frequency_profile_gauge_source(tmp_path):
    code, out = run(tmp_path, "o", "frequency-profile", "--n", "64", "--set", "source=gauge")
    assert code == 0 and load(out / "summary.json")["N0_snapped"] == 0.5


def test_zform_model(tmp_path):
    code, out = run(tmp_path, "o", "zform", "--n", "64", "--set", "k=3")
    s = load(out / "summary.json")
    assert code == 0 and s["N0_snapped"] == 1.5 and s["holonomy"] == -1
    svg = (out / "foliation.svg").read_text()
    assert svg.startswith("<svg") or "<svg" in svg
    assert "<polyline" in svg


def test_zform_torus_leaves_parallel(tmp_path):
    code, out = run(tmp_path, "o", "zform", "--n", "32", "--set", "scenario=torus")
    s = load(out / "summary.json")
    assert code == 0 and s["zero_count"] == 0
    assert np.ptp(s["leaf_directions_deg"]) < 1e-6
    assert "<circle" not in (out / "foliation.svg").read_text()


def test_zform_disk_three_separatrices(tmp_path):
    code, out = run(tmp_path, "o", "zform", "--n", "64", "--set", "scenario=disk")
    s = load(out / "summary.json")
    assert code == 0 and s["zero_count"] == 1
    svg = (out / "foliation.svg").read_text()
    assert svg.count('class="separatrix"') == 3
    assert svg.count("<circle") == 1
    angles = sorted(s["separatrix_angles_deg"])
    assert np.allclose(np.diff(angles), 120.0, atol=5.0)


def test_gauge_fix_pure_gauge(tmp_path):
    code, out = run(tmp_path, "o", "gauge-fix", "--n", "16")
    s = load(out / "gauge_fix.json")
    assert code == 0 and s["converged"]
    assert s["reduction"] >= 1e3
    P = sio.read_field(out / "fixed.sl2")
    assert P.grid.n == 16 and sio.field_tag(out / "fixed.sl2").startswith("sl2lab")


def test_gauge_fix_failure_exit_code(tmp_path):
    code, out = run(tmp_path, "o", "gauge-fix", "--n", "16", "--set", "maxiter=1")
    assert code == 1
    assert load(out / "gauge_fix.json")["converged"] is False


def test_lm_check(tmp_path):
    code, out = run(tmp_path, "o", "lm-check", "--n", "8", "--set", "greens_n=96")
    doc = load(out / "lm_check.json")
    assert code == 0 and doc["passed"]
    assert doc["checks"]["symmetry"]["defect"] <= 1e-10
    assert doc["checks"]["square_identity_generic"]["required"] is False


# ------------------------------------------------------------------ determinism

@pytest.mark.parametrize("args", [
    ["flow", "--n", "8", "--set", "scenario=cs-gradient", "--set", "init=random", "--set", "T=0.05"],
    ["flow", "--n", "8", "--set", "init=random"],
    ["zform", "--n", "64", "--set", "scenario=disk"],
    ["gauge-fix", "--n", "16", "--set", "scenario=random", "--set", "amplitude=0.3"],
    ["frequency-profile", "--n", "64"],
])
def test_byte_identical_reruns(tmp_path, args):
    c1, o1 = run(tmp_path, "a", *args, "--seed", "42")
    c2, o2 = run(tmp_path, "b", *args, "--seed", "42")
    assert c1 == c2
    f1 = sorted(p.name for p in o1.iterdir())
    assert f1 == sorted(p.name for p in o2.iterdir()) and f1
    for name in f1:
        assert (o1 / name).read_bytes() == (o2 / name).read_bytes(), name


def test_seed_changes_random_outputs(tmp_path):
    args = ["flow", "--n", "8", "--set", "init=random", "--set", "T=0.002"]
    _, o1 = run(tmp_path, "a", *args, "--seed", "1")
    _, o2 = run(tmp_path, "b", *args, "--seed", "2")
    assert (o1 / "history.csv").read_bytes() != (o2 / "history.csv").read_bytes()
