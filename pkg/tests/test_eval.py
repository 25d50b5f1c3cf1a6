import json

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from poselift import dataio
from poselift import evaluation as ev
from poselift import geometry as geo
from poselift.errors import AlignmentError, DataError

poses = hnp.arrays(np.float64, (6, 3), elements=st.floats(-100, 100))


def rand_pose(seed, n=6):
    return np.random.default_rng(seed).normal(size=(n, 3))


def test_mpjpe_examples():
    gt = rand_pose(0)
    assert ev.mpjpe(gt, gt) == 0.0
    assert ev.mpjpe(gt + [3.0, 0.0, 0.0], gt) == pytest.approx(0.0, abs=1e-14)
    centered = gt - gt[0]
    assert ev.mpjpe(2 * gt, gt, ev.SCALE_ALIGN) == pytest.approx(0.0, abs=1e-14)
    assert ev.mpjpe(2 * gt, gt) == pytest.approx(np.linalg.norm(centered, axis=1).mean(), abs=1e-14)


def test_mpjpe_accepts_pose_objects_and_batches():
    gt = rand_pose(1)
    assert ev.mpjpe(geo.Pose3D(gt), geo.Pose3D(gt * 1.1)) > 0
    batch = np.stack([gt, gt * 1.5])
    out = ev.mpjpe(batch, np.stack([gt, gt]))
    assert out.shape == (2,) and out[0] == 0.0


def test_mpjpe_errors():
    with pytest.raises(DataError):
        ev.mpjpe(np.zeros((5, 3)), np.zeros((6, 3)))
    with pytest.raises(AlignmentError):
        ev.mpjpe(np.ones((6, 3)), rand_pose(2), ev.SCALE_ALIGN)
    with pytest.raises(ValueError):
        ev.mpjpe(rand_pose(2), rand_pose(2), "procrustes")


@given(poses, poses)
def test_mpjpe_metric_properties(a, b):
    d = ev.mpjpe(a, b)
    assert d >= 0 and d == pytest.approx(ev.mpjpe(b, a), abs=1e-9)
    assert ev.mpjpe(a, a) == 0.0


@given(poses, poses, st.floats(1e-2, 1e2))
def test_scale_align_invariant_to_prediction_scale(a, b, s):
    assume(np.linalg.norm(a - a[0]) > 1e-3)
    assert ev.mpjpe(a * s, b, ev.SCALE_ALIGN) == pytest.approx(ev.mpjpe(a, b, ev.SCALE_ALIGN), rel=1e-9, abs=1e-9)


def test_pck_examples():
    gt = rand_pose(7, n=5)
    assert ev.pck(gt, gt, 0.5) == 1.0
    # every non-central joint exactly the threshold away
    pred = gt.copy()
    pred[1:, 2] += 0.5
    assert ev.pck(pred, gt, 0.5) == 0.0
    # one of four joints within the threshold
    pred[1, 2] = gt[1, 2] + 0.1
    assert ev.pck(pred, gt, 0.5) == 0.25
    assert ev.pck(gt * 1e6, gt, 1e12) == 1.0


def test_pck_strict_at_threshold():
    gt = np.zeros((3, 3))
    pred = np.array([[0, 0, 0], [0, 0, 2.0], [0, 2.0, 0]])  # central joint is not counted
    assert ev.pck(pred, gt, 2.0) == 0.0
    assert ev.pck(pred, gt, 2.0 + 1e-12) == 1.0


@given(poses, poses, st.floats(0, 50), st.floats(0, 50))
def test_pck_monotone_in_threshold(a, b, t1, t2):
    lo, hi = sorted((t1, t2))
    assert ev.pck(a, b, lo) <= ev.pck(a, b, hi)


def test_zero_depth_baseline():
    rng = np.random.default_rng(3)
    p2 = geo.Pose2D(rng.normal(size=(6, 2)))
    out = ev.zero_depth_baseline(p2)
    assert np.array_equal(out.xy, p2.coords) and np.all(out.z == 0)
    gt = np.column_stack([p2.coords, rng.normal(size=6)])
    expected = np.abs(gt[:, 2] - gt[0, 2]).mean()
    assert ev.mpjpe(out, geo.Pose3D(gt)) == pytest.approx(expected, abs=1e-14)
    s = geo.SkeletonSchema("six", tuple("abcdef"), 0, 1, 2, 3, 4)
    assert geo.sin_beta(out, s) == 0.0


def test_flip_diagnostic():
    rng = np.random.default_rng(4)
    planar = np.column_stack([rng.normal(size=(6, 2)), np.zeros(6)])
    pred = rand_pose(5)
    e, f = ev.flip_diagnostic(pred, planar)
    assert e == pytest.approx(f, abs=1e-14)
    gt = rand_pose(6)
    e, f = ev.flip_diagnostic(gt, gt)
    assert e == 0.0
    assert f == pytest.approx(2 * np.abs(gt[:, 2] - gt[0, 2]).mean(), abs=1e-14)
    assert min(e, f) <= e and min(e, f) <= f


# dataset-level reports -----------------------------------------------------------


def _pair(m=12, seed=0):
    schema = dataio.synth_schema()
    rng = np.random.default_rng(seed)
    gt = rng.normal(size=(m, 8, 3))
    actions = ["Walking", "Directions", "Zumba"] * (m // 3)
    gtd = dataio.PoseDataset(schema, gt, "normalized", "synthetic", actions=actions)
    pred = dataio.PoseDataset(schema, gt + rng.normal(0, 0.1, gt.shape), "normalized", "prediction")
    return pred, gtd


def test_report_mean_and_actions(tmp_path):
    pred, gt = _pair()
    rep = ev.evaluate(pred, gt, ev.RELATIVE, pck_threshold=0.2)
    assert abs(rep.mean - np.mean(rep.per_pose)) <= 1e-12
    acts = rep.per_action()
    assert list(acts) == ["Directions", "Walking", "Zumba"]
    assert acts["Walking"] == pytest.approx(rep.per_pose[0::3].mean())
    rep.write_jsonl(tmp_path / "r.jsonl")
    lines = [json.loads(x) for x in (tmp_path / "r.jsonl").read_text().splitlines()]
    assert lines[0]["kind"] == "eval-summary" and lines[0]["mode"] == "relative"
    assert len(lines) == 13 and np.mean([x["error"] for x in lines[1:]]) == pytest.approx(lines[0]["mean"], abs=1e-12)
    table = rep.format_table()
    assert "Directions" in table.splitlines()[-2] and "Avg" in table


def test_report_identical_poses_and_saturated_pck():
    _, gt = _pair()
    rep = ev.evaluate(gt, gt, ev.SCALE_ALIGN, pck_threshold=1e9)
    assert rep.mean == 0.0 and rep.pck == 1.0


def test_report_recovers_raw_units():
    schema = dataio.synth_schema()
    _, gt = _pair()
    scales = np.linspace(100, 400, len(gt))
    gt_mm = dataio.PoseDataset(schema, gt.poses * scales[:, None, None], "raw-mm")
    pred = dataio.PoseDataset(
        schema, gt.poses, "normalized", "prediction", centers=np.zeros((len(gt), 2)), scales=scales
    )
    rep = ev.evaluate(pred, gt_mm)
    assert rep.unit == "raw-mm" and rep.mean == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(DataError, match="records"):
        ev.evaluate(dataio.PoseDataset(schema, gt.poses), gt_mm)


def test_report_input_checks():
    pred, gt = _pair()
    with pytest.raises(DataError):
        ev.evaluate(pred.subset(slice(0, 3)), gt)
    flat = dataio.PoseDataset(gt.schema, gt.poses[..., :2])
    with pytest.raises(DataError):
        ev.evaluate(flat, gt)
