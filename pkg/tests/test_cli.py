import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from poselift import autodiff as ad
from poselift import cli, dataio


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert run("synth", "--out", out, "--seed", 4, "--set", "num_train=160", "--set", "num_test=24") == 0
    return out


def test_synth_files(data_dir, tmp_path):
    schema = dataio.synth_schema()
    train = dataio.load_pose_file(data_dir / "train.jsonl", schema)
    test = dataio.load_pose_file(data_dir / "test.jsonl", schema)
    gt = dataio.load_pose_file(data_dir / "test_gt3d.jsonl", schema)
    assert len(train) == 160 and len(test) == 24 and gt.dims == 3
    assert np.array_equal(gt.poses[..., :2], test.poses)
    assert dataio.load_schema(data_dir / "schema.json") == schema
    run("synth", "--out", tmp_path, "--seed", 4, "--set", "num_train=160", "--set", "num_test=24")
    for name in ("train.jsonl", "test.jsonl", "train_gt3d.jsonl", "test_gt3d.jsonl"):
        assert (tmp_path / name).read_bytes() == (data_dir / name).read_bytes()


def test_config_file_and_overrides(data_dir, tmp_path, caplog):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"synth": {"num_train": 40, "num_test": 8}, "train": {"hidden": 16}}))
    caplog.set_level("INFO", logger="poselift")
    assert run("synth", "--config", cfg, "--out", tmp_path / "d", "--set", "num_test=4") == 0
    assert len(dataio.load_pose_file(tmp_path / "d" / "test.jsonl", dataio.synth_schema())) == 4
    assert any("resolved synth config" in r.message and '"num_train": 40' in r.message for r in caplog.records)


def test_train_smoke_and_log(data_dir, tmp_path):
    start = time.perf_counter()
    assert run("train", data_dir / "train.jsonl", "--out", tmp_path, "--epochs", 2) == 0
    assert time.perf_counter() - start < 60
    assert len((tmp_path / "train_log.jsonl").read_text().splitlines()) == 20
    assert (tmp_path / "latest.ckpt").exists()
    assert json.loads((tmp_path / "config.json").read_text())["hidden"] == 1024


def test_resume_matches_uninterrupted(data_dir, tmp_path):
    common = ("--set", "hidden=32", "--batch-size", 16)
    run("train", data_dir / "train.jsonl", "--out", tmp_path / "full", "--epochs", 2, *common)
    run("train", data_dir / "train.jsonl", "--out", tmp_path / "part", "--epochs", 1, *common)
    run("train", data_dir / "train.jsonl", "--out", tmp_path / "part", "--epochs", 2, "--resume", tmp_path / "part" / "latest.ckpt")
    assert (tmp_path / "full" / "latest.ckpt").read_bytes() == (tmp_path / "part" / "latest.ckpt").read_bytes()
    assert len((tmp_path / "part" / "train_log.jsonl").read_text().splitlines()) == 20


@pytest.fixture(scope="module")
def predicted(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    run("train", data_dir / "train.jsonl", "--out", out, "--epochs", 1, "--set", "hidden=32", "--seed", 1)
    assert run("predict", out / "latest.ckpt", data_dir / "test.jsonl", "--out", out / "pred.jsonl") == 0
    return out / "pred.jsonl"


def test_predict_keeps_xy(data_dir, predicted):
    schema = dataio.synth_schema()
    pred = dataio.load_pose_file(predicted, schema)
    inp = dataio.load_pose_file(data_dir / "test.jsonl", schema)
    assert pred.dims == 3 and pred.provenance == "prediction"
    assert np.array_equal(pred.poses[..., :2], inp.poses)
    assert np.array_equal(pred.scales, inp.scales)


def test_predict_rejects_other_schema(predicted, tmp_path):
    ckpt = predicted.parent / "latest.ckpt"
    fixture = os.path.join(os.path.dirname(__file__), "fixtures", "sample_h36m.jsonl")
    assert run("predict", ckpt, fixture, "--out", tmp_path / "x.jsonl") == cli.EXIT_DATA


def test_eval_outputs(data_dir, predicted, tmp_path, capsys):
    gt = data_dir / "test_gt3d.jsonl"
    assert run("eval", gt, gt, "--pck", 1e6, "--out", tmp_path / "same.jsonl") == 0
    summary = json.loads((tmp_path / "same.jsonl").read_text().splitlines()[0])
    assert summary["mean"] == 0.0 and summary["pck"] == 1.0
    assert run("eval", predicted, gt, "--mode", "scale-align", "--out", tmp_path / "r.jsonl") == 0
    lines = [json.loads(x) for x in (tmp_path / "r.jsonl").read_text().splitlines()]
    assert lines[0]["mode"] == "scale-align"
    assert abs(np.mean([x["error"] for x in lines[1:]]) - lines[0]["mean"]) <= 1e-12
    assert "MPJPE (scale-align" in capsys.readouterr().out


def test_export(data_dir, tmp_path):
    assert run("export", data_dir / "test_gt3d.jsonl", "--format", "svg", "--rotate-every", 30,
               "--max-poses", 1, "--out", tmp_path / "v.svg") == 0
    assert (tmp_path / "v.svg").read_text().count('class="panel"') == 12
    assert run("export", data_dir / "test_gt3d.jsonl", "--format", "obj", "--out", tmp_path / "v.obj") == 0


def test_gradcheck_passes(capsys):
    assert run("gradcheck", "--seed", 3) == 0
    assert "checks passed" in capsys.readouterr().out


def test_gradcheck_catches_wrong_backward(monkeypatch):
    def bad_sin(x):
        x = ad._lift(x)
        return ad.Node(np.sin(x.values), [(x, lambda g: g * np.sin(x.values))], op="sin")

    monkeypatch.setattr(ad, "sin", bad_sin)
    assert run("gradcheck") == cli.EXIT_NUMERICAL


def test_exit_codes(data_dir, tmp_path):
    assert run("train", data_dir / "train.jsonl", "--out", tmp_path, "--set", "learning_rate=-1") == cli.EXIT_CONFIG
    assert run("train", data_dir / "train.jsonl", "--out", tmp_path, "--set", "nope.x=1") == cli.EXIT_CONFIG
    assert run("train", tmp_path / "missing.jsonl", "--out", tmp_path) == cli.EXIT_DATA
    mpii = dataio.load_schema("mpii-16")
    rng = np.random.default_rng(0)
    raw = dataio.PoseDataset(mpii, rng.normal(size=(32, 16, 2)), unit="raw-pixels")
    dataio.save_pose_file(raw, tmp_path / "mpii.jsonl")
    assert run("train", tmp_path / "mpii.jsonl", "--out", tmp_path) == cli.EXIT_CONFIG
    # a non-finite coordinate makes the losses non-finite
    lines = (data_dir / "train.jsonl").read_text().splitlines()
    rec = json.loads(lines[1])
    rec["coords"][1][0] = float("nan")
    (tmp_path / "nan.jsonl").write_text("\n".join([lines[0], json.dumps(rec)] + lines[2:]) + "\n")
    code = run("train", tmp_path / "nan.jsonl", "--out", tmp_path / "nan", "--epochs", 1, "--set", "hidden=8")
    assert code == cli.EXIT_NUMERICAL


def test_console_entry_and_log_level(tmp_path):
    env = dict(os.environ, POSELIFT_LOG="INFO")
    cmd = [sys.executable, "-m", "poselift.cli", "synth", "--out", str(tmp_path), "--set", "num_train=4", "--set", "num_test=1"]
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
    assert proc.returncode == 0 and "resolved synth config" in proc.stderr
    env["POSELIFT_LOG"] = "ERROR"
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stderr == ""
