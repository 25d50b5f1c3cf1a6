import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from poselift import autodiff as ad
from poselift import geometry as geo
from poselift.dataio import load_schema
from poselift.errors import ConfigError, DegeneratePoseError

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def tri_schema():
    return geo.SkeletonSchema("tri", ("a", "b", "c"), central_index=0)


def orient_schema():
    # joints: neck, nose, left shoulder, right shoulder
    return geo.SkeletonSchema(
        "orient",
        ("neck", "nose", "ls", "rs"),
        central_index=0,
        nose_index=1,
        neck_index=0,
        left_shoulder_index=2,
        right_shoulder_index=3,
    )


def orient_pose(v, w):
    out = np.zeros((4, 3))
    out[1] = v
    out[2] = w
    return out


# schema -------------------------------------------------------------------


def test_schema_validation():
    with pytest.raises(ConfigError, match="duplicate"):
        geo.SkeletonSchema("x", ("a", "a"), 0)
    with pytest.raises(ConfigError):
        geo.SkeletonSchema("x", ("a", "b"), 5)
    with pytest.raises(ConfigError):
        geo.SkeletonSchema("x", ("a", "b", "c"), 0, nose_index=1, neck_index=1)
    with pytest.raises(ConfigError, match="nose"):
        tri_schema().require_orientation()


# normalization ------------------------------------------------------------


def test_normalization_hand_example():
    pose, rec = geo.normalize_pose(np.array([[1.0, 1.0], [4.0, 5.0], [-2.0, -3.0]]), tri_schema())
    assert rec.center == (1.0, 1.0)
    assert rec.scale == pytest.approx(10 / 3, abs=1e-15)
    np.testing.assert_allclose(pose.coords, [[0, 0], [0.9, 1.2], [-0.9, -1.2]], atol=1e-15)


def test_normalization_excluding_central_joint():
    _, rec = geo.normalize_pose(np.array([[1.0, 1.0], [4.0, 5.0], [-2.0, -3.0]]), tri_schema(), include_central=False)
    assert rec.scale == pytest.approx(5.0)


def test_normalized_pose_is_fixed_point():
    p = np.array([[0.0, 0.0], [1.5, 0.0], [0.0, -1.5]])
    pose, rec = geo.normalize_pose(p, tri_schema())
    assert rec == geo.NormalizationRecord((0.0, 0.0), 1.0)
    np.testing.assert_array_equal(pose.coords, p)


def test_denormalize_examples():
    rec = geo.NormalizationRecord((2.0, 1.0), 10 / 3)
    np.testing.assert_allclose(geo.denormalize(np.array([[0.9, 1.2]]), rec).coords, [[5.0, 5.0]], atol=1e-14)
    p3 = geo.Pose3D(np.array([[0.9, 1.2, 0.3]]))
    np.testing.assert_allclose(geo.denormalize(p3, rec).coords, [[5.0, 5.0, 1.0]], atol=1e-14)
    ident = geo.denormalize(p3, geo.NormalizationRecord())
    np.testing.assert_array_equal(ident.coords, p3.coords)


def test_degenerate_pose_rejected():
    with pytest.raises(DegeneratePoseError):
        geo.normalize_pose(np.ones((3, 2)), tri_schema())


raw_poses = hnp.arrays(np.float64, (5, 2), elements=finite)


@given(raw_poses)
def test_normalization_postconditions_and_inverse(raw):
    centered = raw - raw[0]
    assume(np.mean(np.linalg.norm(centered, axis=1)) > 1e-3)
    schema = geo.SkeletonSchema("five", tuple("abcde"), 0)
    pose, rec = geo.normalize_pose(raw, schema)
    assert np.all(np.abs(pose.coords[0]) <= 1e-9)
    assert abs(np.mean(np.linalg.norm(pose.coords, axis=1)) - 1) <= 1e-9
    np.testing.assert_allclose(geo.denormalize(pose, rec).coords, raw, atol=1e-12 * max(1.0, np.abs(raw).max()))
    again, rec2 = geo.normalize_pose(pose, schema)
    np.testing.assert_allclose(again.coords, pose.coords, atol=1e-12)
    assert rec2.center == pytest.approx((0.0, 0.0), abs=1e-12) and rec2.scale == pytest.approx(1.0, abs=1e-12)


@given(raw_poses, finite, finite, st.floats(1e-2, 1e2))
def test_normalization_equivariance(raw, a, b, s):
    assume(np.mean(np.linalg.norm(raw - raw[0], axis=1)) > 1e-2)
    schema = geo.SkeletonSchema("five", tuple("abcde"), 0)
    base = geo.normalize_pose(raw, schema)[0].coords
    np.testing.assert_allclose(geo.normalize_pose(raw + [a, b], schema)[0].coords, base, atol=1e-9)
    np.testing.assert_allclose(geo.normalize_pose(raw * s, schema)[0].coords, base, atol=1e-9)


# rotation -----------------------------------------------------------------


def test_rotate_project_identity_and_quarter_turn():
    rng = np.random.default_rng(0)
    p, z = rng.normal(size=(6, 2)), rng.normal(size=6)
    assert np.array_equal(geo.rotate_project(p, z, 0.0), p)
    q = geo.rotate_project(p, z, np.pi / 2)
    np.testing.assert_allclose(q[:, 0], z, atol=1e-15)
    assert np.array_equal(q[:, 1], p[:, 1])


@given(
    hnp.arrays(np.float64, (4, 2), elements=st.floats(-10, 10)),
    hnp.arrays(np.float64, 4, elements=st.floats(-10, 10)),
    st.floats(-np.pi, np.pi),
)
def test_inversion_ambiguity(p, z, theta):
    np.testing.assert_allclose(geo.rotate_project(p, z, theta), geo.rotate_project(p, -z, -theta), rtol=0, atol=1e-12)


@given(st.floats(-np.pi, np.pi), st.integers(0, 2**31 - 1))
def test_rotate_project_matches_rotation_matrix(theta, seed):
    rng = np.random.default_rng(seed)
    pose = rng.normal(size=(5, 3))
    r = np.array([[np.cos(theta), 0, np.sin(theta)], [0, 1, 0], [-np.sin(theta), 0, np.cos(theta)]])
    expected = (pose @ r.T)[:, :2]
    np.testing.assert_allclose(geo.rotate_project(pose[:, :2], pose[:, 2], theta), expected, atol=1e-12)
    np.testing.assert_allclose(geo.rotate_y(pose, theta), pose @ r.T, atol=1e-12)


def test_rotate_project_nodes_matches_numpy_and_keeps_y():
    rng = np.random.default_rng(1)
    p, z, th = rng.normal(size=(3, 8)), rng.normal(size=(3, 4)), rng.uniform(-3, 3, (3, 1))
    out = geo.rotate_project_nodes(ad.constant(p), ad.constant(z), ad.constant(th)).values
    for i in range(3):
        ref = geo.rotate_project(p[i].reshape(4, 2), z[i], th[i, 0])
        np.testing.assert_allclose(out[i].reshape(4, 2), ref, atol=1e-15)
    assert np.array_equal(out[:, 1::2], p[:, 1::2])


def test_rotate_project_nodes_gradients():
    rng = np.random.default_rng(2)
    from poselift import gradcheck as gc

    p, z, th = (ad.parameter(rng.normal(size=s)) for s in ((3, 8), (3, 4), (3, 1)))
    w = ad.constant(rng.normal(size=(3, 8)))
    res = gc.check("rotate", lambda: ad.mean(ad.mul(geo.rotate_project_nodes(p, z, th), w)), [p, z, th])
    assert res.passed, res


def test_sample_theta_distribution():
    rng = np.random.default_rng(0)
    t = geo.sample_theta(rng, 100_000)
    assert np.all((t >= -np.pi) & (t <= np.pi))
    assert abs(t.mean()) < 0.02
    np.testing.assert_array_equal(t[:10], geo.sample_theta(np.random.default_rng(0), 100_000)[:10])


# orientation --------------------------------------------------------------


@pytest.mark.parametrize(
    "v,w,expected",
    [((0, 0, 1), (1, 0, 0), 1.0), ((0, 0, 1), (-1, 0, 0), -1.0), ((1, 5, 0), (1, -2, 0), 0.0)],
)
def test_sin_beta_examples(v, w, expected):
    s = orient_schema()
    assert geo.sin_beta(orient_pose(v, w), s) == pytest.approx(expected, abs=1e-15)
    assert geo.angle_loss(orient_pose(v, w), s) == pytest.approx(max(0.0, -expected), abs=1e-15)


@given(st.integers(0, 2**31 - 1))
def test_sin_beta_properties(seed):
    rng = np.random.default_rng(seed)
    s = orient_schema()
    pose = rng.normal(size=(4, 3))
    sb = geo.sin_beta(pose, s)
    assume(abs(sb) > 1e-9)
    scaled = pose.copy()
    scaled[[1, 2, 3]] = pose[0] + 3 * (pose[[1, 2, 3]] - pose[0])
    assert geo.sin_beta(scaled, s) == pytest.approx(sb, abs=1e-12)
    flipped = pose * [1, 1, -1]
    assert geo.sin_beta(flipped, s) == pytest.approx(-sb, abs=1e-12)
    assert geo.angle_loss(pose, s) + geo.angle_loss(flipped, s) == pytest.approx(abs(sb), abs=1e-12)


def test_flipping_a_correct_pose_creates_loss():
    s = orient_schema()
    pose = orient_pose((0.1, 1.0, 0.8), (1.0, 0.0, 0.2))
    assert geo.sin_beta(pose, s) > 0 and geo.angle_loss(pose, s) == 0
    assert geo.angle_loss(pose * [1, 1, -1], s) > 0


def test_degenerate_orientation_is_finite():
    s = orient_schema()
    pose = np.zeros((4, 3))
    assert geo.sin_beta(pose, s) == 0.0
    assert geo.orientation_degenerate(pose, s)
    p = ad.parameter(geo.flatten_poses(pose[None, :, :2]))
    z = ad.parameter(pose[None, :, 2])
    ad.backward(ad.mean(geo.angle_loss_nodes(p, z, s)))
    assert np.all(np.isfinite(p.grad)) and np.all(np.isfinite(z.grad))


@settings(max_examples=20)
@given(st.integers(0, 2**31 - 1))
def test_node_orientation_matches_numpy(seed):
    rng = np.random.default_rng(seed)
    s = load_schema("h36m-17")
    poses = rng.normal(size=(5, 17, 3))
    p = ad.constant(geo.flatten_poses(poses[..., :2]))
    z = ad.constant(poses[..., 2])
    np.testing.assert_allclose(geo.sin_beta_nodes(p, z, s).values[:, 0], geo.sin_beta(poses, s), atol=1e-14)
    np.testing.assert_allclose(geo.angle_loss_nodes(p, z, s).values[:, 0], geo.angle_loss(poses, s), atol=1e-14)


def test_compose_3d_keeps_xy_bitwise():
    p = geo.Pose2D(np.random.default_rng(3).normal(size=(4, 2)))
    out = geo.compose_3d(p, [1, 2, 3, 4])
    assert np.array_equal(out.xy, p.coords) and list(out.z) == [1, 2, 3, 4]


def test_flatten_order():
    coords = np.arange(12.0).reshape(1, 6, 2)
    flat = geo.flatten_poses(coords)
    assert list(flat[0, :4]) == [0.0, 1.0, 2.0, 3.0]
    assert np.array_equal(geo.unflatten_poses(flat), coords)
