import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from tnqg.cli import main
from tnqg.config import ConfigError, load_preset, parse_config

SMOKE = """\
[lattice]
kind = chain
dims = 4
pbc = true

[model]
h = 2.0

[ansatz]
m = 2
n_modes = 8
init_sigma = 0.01

[schedule]
delta_t = 0.2
windows = 2
points = 9
iterations = 60

[optimizer]
lr = 0.03

[run]
seed = 3
observables = sx_avg, sz_avg
benchmark_horizon = 0.6
cg_m_list = 2, 4
cg_times = 0.3
"""


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg_file = out / "in.cfg"
    cfg_file.write_text(SMOKE)
    code = main(["run", "--config", str(cfg_file), "--out", str(out / "r")])
    assert code == 0
    return out / "r"


def test_config_validation():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("[model]\nfield_strength = 2\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[physics]\nh = 2\n")
    with pytest.raises(ConfigError, match="points"):
        parse_config("[schedule]\npoints = 8\n")
    with pytest.raises(ConfigError, match="bad value"):
        parse_config("[model]\nh = two\n")


def test_presets_parse():
    for name in ("desk-n10-exact", "desk-n4-smoke", "1d-n40-h2",
                 "2d-6x6-critical", "2d-8x8-critical", "2d-6x6-extrapolate",
                 "desk-n8-cg"):
        cfg = load_preset(name)
        assert cfg["schedule.windows"] >= 1
    with pytest.raises(ConfigError, match="available"):
        load_preset("missing-preset")
    # the paper-scale presets carry the published setups
    big = load_preset("1d-n40-h2")
    assert big["lattice.dims"] == [40] and big["ansatz.m"] == 20
    assert big["sampling.samples"] == 512
    crit = load_preset("2d-6x6-critical")
    assert crit["model.h"] == pytest.approx(3.044)
    assert crit["ansatz.m"] == 18


def test_invalid_config_exits_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[model]\nhh = 3\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2


def test_run_outputs(smoke_run):
    assert (smoke_run / "config.cfg").exists()
    assert (smoke_run / "window_00.ckpt.json").exists()
    assert (smoke_run / "window_01.ckpt.json").exists()
    rows = read_csv(smoke_run / "loss_window_00.csv")
    assert list(rows[0]) == ["iter", "loss", "loss_per_site", "grad_norm",
                             "discarded_samples", "wall_ms"]
    meta = json.loads((smoke_run / "trajectory.csv.meta.json").read_text())
    assert {"config_sha256", "code_version", "seed"} <= set(meta)
    traj = read_csv(smoke_run / "trajectory.csv")
    assert list(traj[0]) == ["t", "source", "obs_name", "value_re", "value_im",
                             "loss_t", "loss_t_per_site", "window_index"]
    # strictly increasing global time per observable
    ts = [float(r["t"]) for r in traj if r["obs_name"] == "sx_avg"]
    assert all(b > a for a, b in zip(ts, ts[1:]))
    # the quench starts at <sx> = 1 exactly
    assert float(traj[0]["value_re"]) == pytest.approx(1.0, abs=1e-12)
    assert {r["obs_name"] for r in traj} == {"sx_avg", "sz_avg"}


def test_run_is_reproducible(tmp_path):
    cfg_file = tmp_path / "in.cfg"
    cfg_file.write_text(SMOKE)
    for d in ("a", "b"):
        assert main(["run", "--config", str(cfg_file),
                     "--out", str(tmp_path / d)]) == 0
    ta = (tmp_path / "a" / "trajectory.csv").read_bytes()
    tb = (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert ta == tb


def test_refine(smoke_run):
    assert main(["refine", str(smoke_run)]) == 0
    refined = read_csv(smoke_run / "refined.csv")
    assert refined[0]["source"] == "tnqg-refined"
    # refinement keeps the t=0 observable fixed (c(0) is pinned)
    assert float(refined[0]["value_re"]) == pytest.approx(1.0, abs=1e-9)
    cross = read_csv(smoke_run / "refined_crosscheck.csv")
    assert max(float(r["abs_diff"]) for r in cross) <= 1e-10
    assert (smoke_run / "matrices_window_00.json").exists()


def test_refine_m0_is_pure_phase(tmp_path):
    # with no variational basis the refinement can only rotate the global
    # phase: observables are unchanged from the raw trajectory
    text = SMOKE.replace("m = 2", "m = 0")
    text = text.replace("iterations = 60", "iterations = 2")
    text = text.replace("observables = sx_avg, sz_avg", "observables = sx_avg")
    cfg_file = tmp_path / "m0.cfg"
    cfg_file.write_text(text)
    out = tmp_path / "m0-run"
    assert main(["run", "--config", str(cfg_file), "--out", str(out)]) == 0
    assert main(["refine", str(out)]) == 0
    raw = {r["t"]: float(r["value_re"]) for r in read_csv(out / "trajectory.csv")}
    refined = read_csv(out / "refined.csv")
    for r in refined:
        assert float(r["value_re"]) == pytest.approx(raw[r["t"]], abs=1e-9)


def test_extrapolate(smoke_run):
    assert main(["extrapolate", str(smoke_run)]) == 0
    report = json.loads((smoke_run / "extrapolate_sx_avg.json").read_text())
    assert report["rescale_invariance_diff"] <= 1e-10
    assert report["loss_inf"] >= 0
    assert "thermal" in report and report["thermal"]["beta_eff"] > 0
    # alternative mode table from the raw coefficient parametrization
    assert main(["extrapolate", str(smoke_run), "--method", "fourier"]) == 0


def test_benchmark(tmp_path):
    cfg_file = tmp_path / "in.cfg"
    cfg_file.write_text(SMOKE)
    out = tmp_path / "bench"
    assert main(["benchmark", "--config", str(cfg_file), "--out", str(out)]) == 0
    rows = read_csv(out / "benchmark.csv")
    for r in rows:
        assert float(r["bound"]) + 1e-12 >= float(r["abs_err"])
        assert float(r["state_bound"]) + 1e-9 >= float(r["state_err"])
    t0 = [r for r in rows if float(r["t"]) == 0.0]
    assert all(float(r["abs_err"]) <= 1e-13 for r in t0)
    assert any(r["trained_window"] == "0" for r in rows)
    traj = read_csv(out / "trajectory.csv")
    assert {r["source"] for r in traj} == {"tnqg", "exact"}


def test_cg_study(tmp_path):
    out = tmp_path / "cg"
    assert main(["cg-study", "--preset", "desk-n8-cg", "--out", str(out)]) == 0
    rows = read_csv(out / "cg_study.csv")
    zero_rows = [r for r in rows if r["t"] == "0"]
    assert all(float(r["delta"]) <= 1e-12 for r in zero_rows)
    meta = json.loads((out / "cg_study.csv.meta.json").read_text())
    (fit,) = meta["fitted_exponents"].values()
    assert -2.0 <= fit <= -0.5
    full = [r for r in rows if r["m"] == "256" and r["t"] != "0"]
    assert all(float(r["delta"]) <= 1e-8 for r in full)


def test_mc_estimator_path(tmp_path):
    text = SMOKE.replace("[run]", "[sampling]\nestimator = mc\nsamples = 64\n"
                         "chains = 4\nburn_in = 20\n\n[run]")
    text = text.replace("iterations = 60", "iterations = 8")
    text = text.replace("observables = sx_avg, sz_avg", "observables = sx_avg")
    cfg_file = tmp_path / "mc.cfg"
    cfg_file.write_text(text)
    out = tmp_path / "mc-run"
    assert main(["run", "--config", str(cfg_file), "--out", str(out)]) == 0
    rows = read_csv(out / "trajectory.csv")
    assert len(rows) > 0
    meta = json.loads((out / "trajectory.csv.meta.json").read_text())
    assert meta["estimator"] == "mc"


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "tnqg.cli", "run", "--preset", "nope",
         "--out", str(tmp_path / "x")],
        capture_output=True, text=True)
    assert proc.returncode == 2
    assert "unknown preset" in proc.stderr