import csv
import io

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from quadwind.cli import main
from quadwind.trajectory import Figure8

TINY = {
    "collection": {"duration": 10.0, "validation_duration": 4.0,
                   "winds": [{"speed": 0.0}, {"speed": 3.0}]},
    "training": {"epochs": 2, "batch_adapt": 64, "batch_train": 64},
    "benchmark": {"controllers": ["learned", "constant", "nonlinear"], "seeds": [0],
                  "warmup_laps": 0, "laps": 1,
                  "winds": [{"speed": 0.0}, {"speed": 4.2}, {"speed": 8.5},
                            {"kind": "sinusoidal", "speed": 8.5, "amplitude": 2.4}]},
}


@pytest.fixture
def tiny_config(tmp_path):
    doc = dict(TINY, output_dir=str(tmp_path / "run"))
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


def test_traj_dump_benchmark():
    res = invoke("traj", "dump", "--duration", "1.0", "--rate", "10")
    assert res.exit_code == 0
    rows = list(csv.reader(io.StringIO(res.output)))
    assert rows[0][:4] == ["t", "pos_x", "pos_y", "pos_z"] and len(rows) == 12
    t, pos = float(rows[5][0]), [float(v) for v in rows[5][1:4]]
    np.testing.assert_allclose(pos, Figure8()(t).pos_d, atol=1e-8)


def test_traj_dump_spline_to_file(tmp_path):
    out = tmp_path / "spline.csv"
    res = invoke("traj", "dump", "--kind", "spline", "--duration", "5", "--seed", "3",
                 "--out", out)
    assert res.exit_code == 0
    assert len(out.read_text().splitlines()) == 5 * 50 + 2


def test_pipeline_end_to_end(tiny_config, tmp_path):
    run = tmp_path / "run"
    res = invoke("collect", "--config", tiny_config)
    assert res.exit_code == 0, res.output
    assert (run / "data" / "meta.json").exists()

    res = invoke("train", "--config", tiny_config)
    assert res.exit_code == 0, res.output
    assert (run / "model.json").exists()
    assert len((run / "training_log.csv").read_text().splitlines()) == 4

    tel = tmp_path / "cell.csv"
    res = invoke("eval", "--config", tiny_config, "--controller", "constant", "--wind", "1",
                 "--telemetry", tel)
    assert res.exit_code == 0 and "rms" in res.output
    assert tel.exists()

    res = invoke("bench", "--config", tiny_config, "--check")
    assert (run / "report.csv").exists() and (run / "report.txt").exists()
    assert len(list((run / "telemetry").glob("*.csv"))) == 3 * 4
    failed = "[FAIL]" in res.output
    assert res.output.count("[PASS]") + res.output.count("[FAIL]") == 3
    assert res.exit_code == (1 if failed else 0)


def test_bench_with_missing_checkpoint(tiny_config, tmp_path):
    res = invoke("bench", "--config", tiny_config, "--checkpoint", tmp_path / "none.json",
                 "--no-telemetry")
    assert res.exit_code == 0
    assert "Failed cells:" in res.output and "IoFailure" in res.output
    report = (tmp_path / "run" / "report.csv").read_text()
    assert report.count("IoFailure") == 4


def test_config_error_reports_field_path(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"benchmark": {"winds": [{"speed": "calm"}]}}))
    res = invoke("bench", "--config", path)
    assert res.exit_code != 0
    assert "benchmark.winds[0].speed" in res.output


def test_eval_rejects_bad_wind_index(tiny_config):
    res = invoke("eval", "--config", tiny_config, "--controller", "nonlinear", "--wind", "9")
    assert res.exit_code != 0 and "--wind" in res.output
