import csv
import json
import os
import subprocess
import sys

import pytest

from nframes.cli import DEFAULT_TOLERANCES, RunConfig, main
from nframes.errors import ConfigError


def write_config(tmp_path, **cfg):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def report(out):
    return json.loads((out / "report.json").read_text())


def test_gauge_on_clifford(tmp_path):
    cfg = write_config(tmp_path, surface={"name": "clifford"}, grid={"nr": 64, "ntheta": 128},
                       tolerances={"total_torsion_max": 1e-8})
    out = tmp_path / "out"
    assert main(["gauge", "--config", cfg, "--out", str(out)]) == 0
    rep = report(out)
    assert rep["schema"] == "nframes.report/1"
    assert rep["status"] == "pass"
    assert rep["results"]["gauge"]["total_torsion"] <= 1e-8
    assert {c["name"] for c in rep["criteria"]} >= {"total_torsion", "curvature_invariance"}


def test_rh_on_w2(tmp_path):
    cfg = write_config(tmp_path, surface="holomorphic_graph", grid={"nr": 64})
    out = tmp_path / "out"
    assert main(["rh", "--config", cfg, "--out", str(out)]) == 0
    rep = report(out)
    assert rep["results"]["psi_torsion_sup_error"] <= 2e-2
    assert rep["config"]["grid"] == {"nr": 64, "ntheta": 128}


def test_unknown_surface_is_a_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, surface={"name": "moebius"})
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path / "out")]) == 2
    err = capsys.readouterr().err
    assert "surface.name" in err and "moebius" in err
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("cfg,field", [
    ({"surface": "clifford", "grid": {"nr": 3}}, "grid"),
    ({"surface": "clifford", "grid": {"nr": "64"}}, "grid.nr"),
    ({"surface": "clifford", "tolerances": {"bogus": 1}}, "tolerances.bogus"),
    ({"surface": "clifford", "tolerances": {"rh": -1}}, "tolerances.rh"),
    ({"surface": "clifford", "seed": 1.5}, "seed"),
    ({"surface": {"name": "clifford", "params": {"r": 1}}}, "surface.params"),
    ({"surface": "clifford", "colour": "red"}, "config"),
    ({}, "surface"),
])
def test_config_validation(cfg, field):
    with pytest.raises(ConfigError, match=field):
        RunConfig.from_dict(cfg, pipeline="analyze")


def test_bad_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["analyze", "--config", str(bad)]) == 2
    assert main(["analyze", "--config", str(tmp_path / "missing.json")]) == 2


def test_pipeline_error_is_reported(tmp_path):
    # the gauge needs conformal parameters; the Veronese chart is not conformal
    cfg = write_config(tmp_path, surface="veronese", grid={"nr": 16})
    out = tmp_path / "out"
    assert main(["gauge", "--config", cfg, "--out", str(out)]) == 1
    rep = report(out)
    assert rep["status"] == "error"
    assert rep["error"].startswith("NonConformalError")
    assert not (out / "fields.csv").exists()


def test_failed_assertion_exits_one(tmp_path):
    cfg = write_config(tmp_path, surface="holomorphic_graph", grid={"nr": 16},
                       tolerances={"total_torsion_max": 1.0})
    out = tmp_path / "out"
    assert main(["gauge", "--config", cfg, "--out", str(out)]) == 1
    assert report(out)["status"] == "fail"


@pytest.mark.parametrize("pipeline", ["analyze", "residuals", "bounds"])
def test_pipelines_run(tmp_path, pipeline):
    cfg = write_config(tmp_path, surface="holomorphic_graph", grid={"nr": 16})
    out = tmp_path / pipeline
    assert main([pipeline, "--config", cfg, "--out", str(out)]) == 0
    rep = report(out)
    assert rep["status"] == "pass"
    assert rep["config"]["pipeline"] == pipeline


def test_csv_full_precision(tmp_path):
    cfg = write_config(tmp_path, surface="holomorphic_graph", grid={"nr": 16})
    out = tmp_path / "out"
    main(["analyze", "--config", cfg, "--out", str(out)])
    with open(out / "fields.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:4] == ["r", "theta", "u", "v"]
    assert len(rows) == 1 + 17 * 32
    values = [float(x) for x in rows[1]]
    assert values[0] == 1 / 32
    w_col = rows[0].index("W")
    assert float(rows[1][w_col]) == 1 + 4 * (1 / 32) ** 2


def test_overrides_and_determinism(tmp_path):
    cfg = write_config(tmp_path, surface="enneper_r5", grid={"nr": 64, "ntheta": 128}, seed=3)
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["gauge", "--config", cfg, "--nr", "16", "--seed", "11"]
    main(args + ["--out", str(a)])
    main(args + ["--out", str(b)])
    ra, rb = report(a), report(b)
    assert ra["config"]["grid"] == {"nr": 16, "ntheta": 32}
    assert ra["config"]["seed"] == 11
    ra.pop("timings"), rb.pop("timings")
    assert ra == rb
    assert (a / "fields.csv").read_bytes() == (b / "fields.csv").read_bytes()


def test_no_temporary_files_left(tmp_path):
    cfg = write_config(tmp_path, surface="clifford", grid={"nr": 16})
    out = tmp_path / "out"
    main(["analyze", "--config", cfg, "--out", str(out)])
    assert sorted(p.name for p in out.iterdir()) == ["fields.csv", "report.json"]


def test_list_surfaces(capsys):
    assert main(["list-surfaces"]) == 0
    text = capsys.readouterr().out
    for name in ("clifford", "holomorphic_graph", "veronese"):
        assert name in text


def test_console_script_and_thread_cap(tmp_path):
    cfg = write_config(tmp_path, surface="clifford", grid={"nr": 16})
    env = dict(os.environ, NFRAMES_THREADS="1")
    code = ("import os, sys; from nframes.cli import main; "
            "rc = main(sys.argv[1:]); print(os.environ['OPENBLAS_NUM_THREADS']); sys.exit(rc)")
    proc = subprocess.run([sys.executable, "-c", code, "analyze", "--config", cfg, "--out", str(tmp_path / "o")],
                          env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip().endswith("1")


def test_default_tolerances_are_documented():
    readme = open(os.path.join(os.path.dirname(__file__), "..", "README.md")).read()
    for key in DEFAULT_TOLERANCES:
        assert f"`{key}`" in readme
