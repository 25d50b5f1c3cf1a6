"""Pose files, skeleton schema files and the synthetic skeleton generator.

Pose file grammar (JSON Lines, UTF-8, one object per line)::

    line 1   header  {"format": "poselift-poses", "version": 1,
                      "schema": <name>, "joints": [<joint name>, ...],
                      "dims": 2 | 3, "unit": "raw-pixels" | "raw-mm" | "normalized",
                      "provenance": "ground-truth-2d" | "detector" | "synthetic" | "prediction"}
    line 2+  record  {"id": <string>, "coords": [[x, y(, z)], ...],
                      optional "action": <string>,
                      optional "norm": {"center": [cx, cy], "scale": s},
                      optional "view_angle": <radians>}

Coordinates follow the header's joint order; on load they are permuted into
the schema's order by name.  Floats are written with 17 significant digits
so a save/load round trip is exact.

Schema file grammar (a single JSON object)::

    {"format": "poselift-schema", "version": 1, "name": <name>,
     "joints": [...], "central": <joint>, "nose": <joint | null>,
     "neck": <joint | null>, "left_shoulder": <joint | null>,
     "right_shoulder": <joint | null>, "edges": [[<parent>, <child>], ...]}
"""

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import geometry as geo
from .errors import ConfigError, DataError, ParseError

POSE_FORMAT = "poselift-poses"
SCHEMA_FORMAT = "poselift-schema"
FORMAT_VERSION = 1
PROVENANCES = ("ground-truth-2d", "detector", "synthetic", "prediction")
PRESETS = ("h36m-17", "mpii-16", "synth-8")


@dataclass
class PoseDataset:
    """A stack of poses sharing one schema.

    ``poses`` is ``(M, N, 2)`` or ``(M, N, 3)``.  ``centers``/``scales`` hold
    per-pose normalization records when the poses were normalized from raw
    data.  ``gt3d`` optionally pairs each 2D pose with a normalized 3D
    ground truth in the same (camera) frame; ``view_angles`` is the y-axis
    camera rotation used to synthesize a pose, when known.
    """

    schema: geo.SkeletonSchema
    poses: np.ndarray
    unit: str = geo.NORMALIZED
    provenance: str = "ground-truth-2d"
    ids: list = None
    actions: list = None
    centers: np.ndarray = None
    scales: np.ndarray = None
    view_angles: np.ndarray = None
    gt3d: np.ndarray = None

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=np.float64)
        if self.poses.ndim != 3 or self.poses.shape[2] not in (2, 3):
            raise DataError(f"poses must be (M, N, 2) or (M, N, 3), got {self.poses.shape}")
        if self.poses.shape[1] != self.schema.num_joints:
            raise DataError(
                f"poses have {self.poses.shape[1]} joints but schema {self.schema.name!r} has {self.schema.num_joints}"
            )
        if self.unit not in geo.UNITS:
            raise DataError(f"unknown unit {self.unit!r}")
        if self.provenance not in PROVENANCES:
            raise DataError(f"unknown provenance {self.provenance!r}")
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self.poses))]
        if self.gt3d is not None and self.gt3d.shape != (len(self.poses), self.schema.num_joints, 3):
            raise DataError(f"gt3d shape {self.gt3d.shape} does not pair with poses {self.poses.shape}")

    def __len__(self):
        return len(self.poses)

    @property
    def dims(self):
        return self.poses.shape[2]

    def records(self):
        if self.scales is None:
            return None
        return [geo.NormalizationRecord(tuple(map(float, c)), float(s)) for c, s in zip(self.centers, self.scales)]

    def subset(self, index):
        def pick(x):
            if x is None:
                return None
            if isinstance(x, list):
                return [x[i] for i in np.arange(len(x))[index]]
            return x[index]

        return PoseDataset(
            self.schema,
            self.poses[index],
            self.unit,
            self.provenance,
            pick(self.ids),
            pick(self.actions),
            pick(self.centers),
            pick(self.scales),
            pick(self.view_angles),
            pick(self.gt3d),
        )


def normalize_dataset(dataset, include_central=True):
    """Normalize every 2D pose and keep the per-pose records."""
    if dataset.dims != 2:
        raise DataError("only 2D datasets can be normalized")
    if dataset.unit == geo.NORMALIZED:
        return dataset
    norm, centers, scales = geo.normalize_coords(dataset.poses, dataset.schema.central_index, include_central)
    return PoseDataset(
        dataset.schema,
        norm,
        geo.NORMALIZED,
        dataset.provenance,
        list(dataset.ids),
        dataset.actions,
        centers,
        scales,
        dataset.view_angles,
        dataset.gt3d,
    )


# ---------------------------------------------------------------------------
# pose files


def _fmt(x):
    text = format(float(x), ".17g")
    # JSON parses "-0" as the integer 0; keep the sign of negative zero
    return "-0.0" if text == "-0" else text


def _coords_json(rows):
    return "[" + ",".join("[" + ",".join(_fmt(v) for v in row) + "]" for row in rows) + "]"


def save_pose_file(dataset, path):
    schema = dataset.schema
    header = {
        "format": POSE_FORMAT,
        "version": FORMAT_VERSION,
        "schema": schema.name,
        "joints": list(schema.joint_names),
        "dims": int(dataset.dims),
        "unit": dataset.unit,
        "provenance": dataset.provenance,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header) + "\n")
        for i in range(len(dataset)):
            parts = [f'"id": {json.dumps(str(dataset.ids[i]))}', f'"coords": {_coords_json(dataset.poses[i])}']
            if dataset.actions is not None:
                parts.append(f'"action": {json.dumps(dataset.actions[i])}')
            if dataset.scales is not None:
                c = dataset.centers[i]
                parts.append(f'"norm": {{"center": [{_fmt(c[0])},{_fmt(c[1])}], "scale": {_fmt(dataset.scales[i])}}}')
            if dataset.view_angles is not None:
                parts.append(f'"view_angle": {_fmt(dataset.view_angles[i])}')
            fh.write("{" + ", ".join(parts) + "}\n")


def _number(v, line, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"non-numeric coordinate {v!r}", line, path)
    return float(v)


def load_pose_file(path, schema):
    """Read a pose file and reorder its joints into ``schema`` order."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1, path)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid header JSON: {exc.msg}", 1, path) from None
    if not isinstance(header, dict) or header.get("format") != POSE_FORMAT:
        raise ParseError(f"header must declare format {POSE_FORMAT!r}", 1, path)
    if header.get("version") != FORMAT_VERSION:
        raise ParseError(f"unsupported pose file version {header.get('version')!r}", 1, path)
    dims = header.get("dims")
    if dims not in (2, 3):
        raise ParseError(f"dims must be 2 or 3, got {dims!r}", 1, path)
    unit, provenance = header.get("unit"), header.get("provenance", "ground-truth-2d")
    if unit not in geo.UNITS:
        raise ParseError(f"unknown unit {unit!r}", 1, path)
    if provenance not in PROVENANCES:
        raise ParseError(f"unknown provenance {provenance!r}", 1, path)

    file_joints = header.get("joints")
    if not isinstance(file_joints, list):
        raise ParseError("header lacks a joints list", 1, path)
    if len(set(file_joints)) != len(file_joints):
        raise ParseError("duplicate joint names in header", 1, path)
    for name in file_joints:
        if name not in schema.joint_names:
            raise ParseError(f"unknown joint name {name!r} for schema {schema.name!r}", 1, path)
    missing = [name for name in schema.joint_names if name not in file_joints]
    if missing:
        raise ParseError(
            f"file has {len(file_joints)} joints, schema {schema.name!r} needs {schema.num_joints}; "
            f"missing {', '.join(missing)}",
            1,
            path,
        )
    order = [file_joints.index(name) for name in schema.joint_names]

    ids, coords, actions, centers, scales, angles = [], [], [], [], [], []
    n = len(file_joints)
    for lineno, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        try:
            rec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno, path) from None
        raw = rec.get("coords")
        if not isinstance(raw, list) or len(raw) != n:
            got = len(raw) if isinstance(raw, list) else "no"
            raise ParseError(f"expected {n} joints, got {got}", lineno, path)
        pose = np.empty((n, dims))
        for j, row in enumerate(raw):
            if not isinstance(row, list) or len(row) != dims:
                raise ParseError(f"joint {file_joints[j]!r} needs {dims} coordinates", lineno, path)
            pose[j] = [_number(v, lineno, path) for v in row]
        coords.append(pose[order])
        ids.append(str(rec.get("id", len(ids))))
        actions.append(rec.get("action"))
        norm = rec.get("norm")
        if norm is not None:
            centers.append([_number(v, lineno, path) for v in norm["center"]])
            scales.append(_number(norm["scale"], lineno, path))
        if "view_angle" in rec:
            angles.append(_number(rec["view_angle"], lineno, path))

    m = len(coords)
    for label, seq in (("norm", centers), ("view_angle", angles)):
        if seq and len(seq) != m:
            raise ParseError(f"field {label!r} present on some records but not all", None, path)
    has_actions = any(a is not None for a in actions)
    if has_actions and any(a is None for a in actions):
        raise ParseError("field 'action' present on some records but not all", None, path)
    return PoseDataset(
        schema,
        np.array(coords).reshape(m, schema.num_joints, dims),
        unit,
        provenance,
        ids,
        actions if has_actions else None,
        np.array(centers) if centers else None,
        np.array(scales) if scales else None,
        np.array(angles) if angles else None,
    )


# ---------------------------------------------------------------------------
# schema files


def schema_from_dict(data, source=None):
    if not isinstance(data, dict) or data.get("format", SCHEMA_FORMAT) != SCHEMA_FORMAT:
        raise ParseError(f"not a {SCHEMA_FORMAT} document", None, source)
    joints = data.get("joints")
    if not isinstance(joints, list) or not joints or not all(isinstance(j, str) for j in joints):
        raise ParseError("schema needs a non-empty list of joint names", None, source)
    dupes = sorted({j for j in joints if joints.count(j) > 1})
    if dupes:
        raise ParseError(f"duplicate joint name(s): {', '.join(dupes)}", None, source)

    def idx(key, required=False):
        name = data.get(key)
        if name is None:
            if required:
                raise ParseError(f"schema lacks {key!r}", None, source)
            return None
        if name not in joints:
            raise ParseError(f"{key} joint {name!r} is not in the joint list", None, source)
        return joints.index(name)

    edges = []
    for e in data.get("edges", []):
        if len(e) != 2 or e[0] not in joints or e[1] not in joints:
            raise ParseError(f"bad edge {e!r}", None, source)
        edges.append((joints.index(e[0]), joints.index(e[1])))
    try:
        return geo.SkeletonSchema(
            name=data.get("name", "custom"),
            joint_names=joints,
            central_index=idx("central", required=True),
            nose_index=idx("nose"),
            neck_index=idx("neck"),
            left_shoulder_index=idx("left_shoulder"),
            right_shoulder_index=idx("right_shoulder"),
            edges=edges,
        )
    except ConfigError as exc:
        raise ParseError(str(exc), None, source) from None


def load_schema(path_or_preset):
    """Load a schema file, or a shipped preset by name (``h36m-17``, ``mpii-16``, ``synth-8``)."""
    key = str(path_or_preset)
    if key in PRESETS:
        text = resources.files("poselift").joinpath("schemas", f"{key}.json").read_text(encoding="utf-8")
        source = key
    else:
        path = Path(key)
        if not path.exists():
            raise ConfigError(f"schema {key!r} is neither a file nor a preset ({', '.join(PRESETS)})")
        text, source = path.read_text(encoding="utf-8"), path
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, source) from None
    return schema_from_dict(data, source)


def save_schema(schema, path):
    data = {"format": SCHEMA_FORMAT, "version": FORMAT_VERSION}
    data.update(schema.to_dict())
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# synthetic skeleton


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    one, zero = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([one, zero, zero], -1), np.stack([zero, c, -s], -1), np.stack([zero, s, c], -1)], -2)


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    one, zero = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, zero, s], -1), np.stack([zero, one, zero], -1), np.stack([-s, zero, c], -1)], -2)


def _rot_z(a):
    c, s = np.cos(a), np.sin(a)
    one, zero = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, -s, zero], -1), np.stack([s, c, zero], -1), np.stack([zero, zero, one], -1)], -2)


def _apply(r, v):
    return np.einsum("...ij,...j->...i", r, v)


@dataclass
class SynthConfig:
    """Parameters of the 8-joint synthetic torso.

    Body frame: y up, the figure faces +z, its left side is +x.  Lengths are
    millimetres; angles are radians as ``(low, high)`` ranges sampled
    uniformly.
    """

    num_train: int = 10000
    num_test: int = 1000
    seed: int = 0
    bone_lengths: dict = field(
        default_factory=lambda: {
            "hip": 120.0,
            "spine": 250.0,
            "neck": 250.0,
            "head": 150.0,
            "shoulder": 180.0,
        }
    )
    angle_ranges: dict = field(
        default_factory=lambda: {
            "lean": (0.0, 0.3),
            "side_bend": (-0.1, 0.1),
            "upper_lean": (0.0, 0.2),
            "twist": (-0.2, 0.2),
            "head_yaw": (-0.3, 0.3),
            "head_pitch": (0.5, 0.9),
            "shoulder_raise": (-0.15, 0.15),
        }
    )
    view_range: tuple = (-np.pi, np.pi)
    min_sin_beta: float = 0.0
    max_attempts: int = 100

    def validate(self):
        for k, v in self.bone_lengths.items():
            if not v > 0:
                raise ConfigError(f"bone length {k!r} must be positive, got {v}")
        for k, (lo, hi) in self.angle_ranges.items():
            if lo > hi:
                raise ConfigError(f"angle range {k!r} is empty: ({lo}, {hi})")
        if self.num_train < 0 or self.num_test < 0:
            raise ConfigError("sample counts must be non-negative")
        lo, hi = self.view_range
        if lo > hi:
            raise ConfigError(f"view range is empty: {self.view_range}")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "angle_ranges" in data:
            base = cls().angle_ranges
            base.update({k: tuple(v) for k, v in data["angle_ranges"].items()})
            data["angle_ranges"] = base
        if "bone_lengths" in data:
            base = cls().bone_lengths
            base.update(data["bone_lengths"])
            data["bone_lengths"] = base
        if "view_range" in data:
            data["view_range"] = tuple(data["view_range"])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synth options: {', '.join(sorted(unknown))}")
        return cls(**data)


def synth_schema():
    return load_schema("synth-8")


def _body_poses(cfg, rng, m):
    """``m`` body-frame poses in schema ``synth-8`` order, shape (m, 8, 3)."""
    r = cfg.angle_ranges
    L = cfg.bone_lengths

    def draw(key):
        lo, hi = r[key]
        return rng.uniform(lo, hi, m)

    lean, bend, upper, twist = draw("lean"), draw("side_bend"), draw("upper_lean"), draw("twist")
    yaw, pitch = draw("head_yaw"), draw("head_pitch")
    raise_l, raise_r = draw("shoulder_raise"), draw("shoulder_raise")

    up = np.array([0.0, 1.0, 0.0])
    left = np.array([1.0, 0.0, 0.0])
    r_torso = _rot_z(bend) @ _rot_x(lean)
    r_upper = r_torso @ _rot_x(upper) @ _rot_y(twist)
    r_head = r_upper @ _rot_y(yaw) @ _rot_x(pitch)

    out = np.zeros((m, 8, 3))
    out[:, 6] = L["hip"] * left
    out[:, 7] = -L["hip"] * left
    out[:, 1] = L["spine"] * _apply(r_torso, np.broadcast_to(up, (m, 3)))
    out[:, 2] = out[:, 1] + L["neck"] * _apply(r_upper, np.broadcast_to(up, (m, 3)))
    out[:, 3] = out[:, 2] + L["head"] * _apply(r_head, np.broadcast_to(up, (m, 3)))
    out[:, 4] = out[:, 2] + L["shoulder"] * _apply(r_upper @ _rot_z(raise_l), np.broadcast_to(left, (m, 3)))
    out[:, 5] = out[:, 2] + L["shoulder"] * _apply(r_upper @ _rot_z(-raise_r), np.broadcast_to(-left, (m, 3)))
    return out


def _sample_valid_bodies(cfg, rng, m, schema):
    bodies = np.zeros((0, 8, 3))
    for _ in range(cfg.max_attempts):
        if len(bodies) >= m:
            break
        cand = _body_poses(cfg, rng, max(m - len(bodies), 1) * 2)
        ok = geo.sin_beta(cand, schema) > cfg.min_sin_beta
        bodies = np.concatenate([bodies, cand[ok]], axis=0)
    if len(bodies) < m:
        raise ConfigError("angle ranges admit too few poses with the shoulders on the correct side of the face")
    return bodies[:m]


def _views(cfg, rng, schema, bodies, provenance):
    m = len(bodies)
    angles = rng.uniform(cfg.view_range[0], cfg.view_range[1], m)
    cam = geo.rotate_y(bodies, angles)
    norm, centers, scales = geo.normalize_coords(cam[:, :, :2], schema.central_index)
    gt = np.empty_like(cam)
    gt[:, :, :2] = norm
    gt[:, :, 2] = (cam[:, :, 2] - cam[:, schema.central_index, 2][:, None]) / scales[:, None]
    return PoseDataset(
        schema,
        norm,
        geo.NORMALIZED,
        provenance,
        centers=centers,
        scales=scales,
        view_angles=angles,
        gt3d=gt,
    )


def synth_dataset(cfg, rng=None):
    """Sample ``(train, test)`` datasets of normalized 2D views with paired 3D truth.

    Every body pose has its shoulders on the anatomically correct side
    (positive ``sin_beta``).  Each is seen from one uniformly drawn y-axis
    camera angle; the 2D view is the orthographic projection, normalized,
    and ``gt3d`` is the camera-frame 3D pose normalized with the same record.
    """
    cfg.validate()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    schema = synth_schema()
    bodies = _sample_valid_bodies(cfg, rng, cfg.num_train + cfg.num_test, schema)
    ds = _views(cfg, rng, schema, bodies, "synthetic")
    train = ds.subset(slice(0, cfg.num_train))
    test = ds.subset(slice(cfg.num_train, cfg.num_train + cfg.num_test))
    train.ids = [f"train-{i}" for i in range(len(train))]
    test.ids = [f"test-{i}" for i in range(len(test))]
    return train, test


def gt3d_dataset(dataset):
    """The paired 3D ground truth as a standalone 3D :class:`PoseDataset`."""
    if dataset.gt3d is None:
        raise DataError("dataset carries no 3D ground truth")
    return PoseDataset(
        dataset.schema,
        dataset.gt3d,
        geo.NORMALIZED,
        dataset.provenance,
        list(dataset.ids),
        dataset.actions,
        dataset.centers,
        dataset.scales,
        dataset.view_angles,
    )
