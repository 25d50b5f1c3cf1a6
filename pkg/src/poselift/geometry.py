"""Skeleton-space math: normalization, rotate-and-project, orientation loss.

Conventions used throughout the package:

* ``y`` is the vertical image axis; rotations are about ``y`` only and the
  camera is orthographic, so a rotation by ``theta`` maps
  ``x -> x cos(theta) + z sin(theta)`` and leaves ``y`` untouched.
* Poses are ``(N, 2)`` or ``(N, 3)`` arrays in schema joint order.  Batches
  fed to the networks are flattened row-major to ``(x1, y1, ..., xN, yN)``.
"""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DegeneratePoseError

RAW_PIXELS = "raw-pixels"
RAW_MM = "raw-mm"
NORMALIZED = "normalized"
UNITS = (RAW_PIXELS, RAW_MM, NORMALIZED)

ORIENTATION_EPS = 1e-8
ORIENTATION_FIELDS = ("nose_index", "neck_index", "left_shoulder_index", "right_shoulder_index")


@dataclass(frozen=True)
class SkeletonSchema:
    """Joint layout shared by data files, networks and checkpoints."""

    name: str
    joint_names: tuple
    central_index: int
    nose_index: int = None
    neck_index: int = None
    left_shoulder_index: int = None
    right_shoulder_index: int = None
    edges: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        n = len(self.joint_names)
        if n == 0:
            raise ConfigError("schema has no joints")
        seen = set()
        for j in self.joint_names:
            if j in seen:
                raise ConfigError(f"duplicate joint name {j!r} in schema {self.name!r}")
            seen.add(j)
        if not 0 <= self.central_index < n:
            raise ConfigError(f"central_index {self.central_index} out of range for {n} joints")
        present = [getattr(self, f) for f in ORIENTATION_FIELDS if getattr(self, f) is not None]
        for idx in present:
            if not 0 <= idx < n:
                raise ConfigError(f"orientation joint index {idx} out of range for {n} joints")
        if len(set(present)) != len(present):
            raise ConfigError(f"orientation joint indices must be distinct, got {present}")
        for a, b in self.edges:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise ConfigError(f"invalid edge ({a}, {b}) for {n} joints")

    @property
    def num_joints(self):
        return len(self.joint_names)

    @property
    def has_orientation(self):
        return all(getattr(self, f) is not None for f in ORIENTATION_FIELDS)

    def require_orientation(self):
        missing = [f for f in ORIENTATION_FIELDS if getattr(self, f) is None]
        if missing:
            raise ConfigError(
                f"schema {self.name!r} lacks {', '.join(missing)}; the angle loss needs "
                "nose, neck and both shoulders"
            )

    def index(self, joint):
        try:
            return self.joint_names.index(joint)
        except ValueError:
            raise ConfigError(f"joint {joint!r} not in schema {self.name!r}") from None

    def to_dict(self):
        def name_of(i):
            return None if i is None else self.joint_names[i]

        return {
            "name": self.name,
            "joints": list(self.joint_names),
            "central": name_of(self.central_index),
            "nose": name_of(self.nose_index),
            "neck": name_of(self.neck_index),
            "left_shoulder": name_of(self.left_shoulder_index),
            "right_shoulder": name_of(self.right_shoulder_index),
            "edges": [[self.joint_names[a], self.joint_names[b]] for a, b in self.edges],
        }

    def digest(self):
        """Stable SHA-256 of the schema contents."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class Pose2D:
    coords: np.ndarray
    unit: str = NORMALIZED

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ValueError(f"Pose2D coords must be (N, 2), got {self.coords.shape}")
        if self.unit not in UNITS:
            raise ValueError(f"unknown unit {self.unit!r}")


@dataclass
class Pose3D:
    coords: np.ndarray
    unit: str = NORMALIZED

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise ValueError(f"Pose3D coords must be (N, 3), got {self.coords.shape}")
        if self.unit not in UNITS:
            raise ValueError(f"unknown unit {self.unit!r}")

    @property
    def xy(self):
        return self.coords[:, :2]

    @property
    def z(self):
        return self.coords[:, 2]


@dataclass(frozen=True)
class NormalizationRecord:
    center: tuple = (0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise DegeneratePoseError(f"normalization scale must be positive, got {self.scale}")


def _coords(pose):
    return pose.coords if isinstance(pose, (Pose2D, Pose3D)) else np.asarray(pose, dtype=np.float64)


# ---------------------------------------------------------------------------
# normalization


def normalize_coords(coords, central_index, include_central=True):
    """Vectorized normalization of ``(..., N, 2)`` joint arrays.

    Returns ``(normalized, centers, scales)`` with ``centers`` of shape
    ``(..., 2)`` and ``scales`` of shape ``(...)``.  The scale is the mean
    distance of the joints from the central joint; ``include_central``
    controls whether the central joint's zero distance enters the mean.
    """
    coords = np.asarray(coords, dtype=np.float64)
    centers = coords[..., central_index, :]
    centered = coords - centers[..., None, :]
    dist = np.sqrt(np.sum(centered**2, axis=-1))
    if include_central:
        scales = dist.mean(axis=-1)
    else:
        scales = (dist.sum(axis=-1)) / (coords.shape[-2] - 1)
    if np.any(~(scales > 0)):
        raise DegeneratePoseError("all joints coincide with the central joint; cannot normalize")
    return centered / scales[..., None, None], centers, scales


def normalize_pose(raw, schema, include_central=True):
    """Center on the schema's central joint and divide by the mean joint distance.

    Accepts already-normalized poses too (the result is then the same pose
    up to rounding with record ``((0, 0), 1)``).
    """
    coords = _coords(raw)
    if coords.shape != (schema.num_joints, 2):
        raise ValueError(f"expected ({schema.num_joints}, 2) coordinates, got {coords.shape}")
    norm, center, scale = normalize_coords(coords, schema.central_index, include_central)
    record = NormalizationRecord((float(center[0]), float(center[1])), float(scale))
    return Pose2D(norm, NORMALIZED), record


def denormalize(pose, record, unit=RAW_PIXELS):
    """Inverse of :func:`normalize_pose`; a depth column is scaled, never shifted."""
    coords = _coords(pose) * record.scale
    coords[:, 0] += record.center[0]
    coords[:, 1] += record.center[1]
    return Pose3D(coords, unit) if coords.shape[1] == 3 else Pose2D(coords, unit)


# ---------------------------------------------------------------------------
# rotation and projection


def rotate_project(p, z, theta):
    """Rotate the pose ``(p, z)`` about the vertical axis and project orthographically.

    ``p`` is ``(N, 2)`` (or a :class:`Pose2D`), ``z`` has length ``N``.  Returns
    the same kind as ``p``.
    """
    coords = _coords(p)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.shape[0] != coords.shape[0]:
        raise ValueError(f"depth length {z.shape[0]} does not match {coords.shape[0]} joints")
    out = np.empty_like(coords)
    out[:, 0] = coords[:, 0] * np.cos(theta) + z * np.sin(theta)
    out[:, 1] = coords[:, 1]
    return Pose2D(out, p.unit) if isinstance(p, Pose2D) else out


def rotate_y(coords, theta):
    """Rotate ``(..., N, 3)`` joints about the y axis by ``theta`` (per leading index)."""
    coords = np.asarray(coords, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)[..., None]
    c, s = np.cos(theta), np.sin(theta)
    x, y, z = coords[..., 0], coords[..., 1], coords[..., 2]
    return np.stack([x * c + z * s, y, z * c - x * s], axis=-1)


def rotate_project_nodes(p, z, theta):
    """Batched, differentiable rotate-and-project.

    Args:
        p: Node ``(B, 2N)`` of flattened poses.
        z: Node ``(B, N)`` of depths.
        theta: Node ``(B, 1)`` of angles, one per row.

    Returns:
        Node ``(B, 2N)``; the ``y`` entries are copied from ``p`` bit for bit.
    """
    p, z, theta = (t if isinstance(t, ad.Node) else ad.constant(t) for t in (p, z, theta))
    b, n2 = p.shape
    if z.shape != (b, n2 // 2) or n2 % 2 or theta.shape != (b, 1):
        raise ad.ShapeError(f"rotate_project: incompatible shapes p={p.shape} z={z.shape} theta={theta.shape}")
    x, zv = p.values[:, 0::2], z.values
    c, s = np.cos(theta.values), np.sin(theta.values)
    out = p.values.copy()
    out[:, 0::2] = x * c + zv * s

    def back_p(g):
        gp = g.copy()
        gp[:, 0::2] *= c
        return gp

    def back_z(g):
        return g[:, 0::2] * s

    def back_theta(g):
        return np.sum(g[:, 0::2] * (zv * c - x * s), axis=1, keepdims=True)

    return ad.Node(out, [(p, back_p), (z, back_z), (theta, back_theta)], op="rotate_project")


def sample_theta(rng, size=None):
    """Angles drawn uniformly from [-pi, pi]."""
    return rng.uniform(-np.pi, np.pi, size)


def compose_3d(p, z):
    """Stack 2D joints and a depth vector into a :class:`Pose3D`."""
    coords = _coords(p)
    out = np.empty((coords.shape[0], 3))
    out[:, :2] = coords
    out[:, 2] = np.asarray(z, dtype=np.float64).reshape(-1)
    return Pose3D(out, p.unit if isinstance(p, Pose2D) else NORMALIZED)


def flatten_poses(coords):
    """``(B, N, 2)`` -> ``(B, 2N)`` in (x1, y1, ..., xN, yN) order."""
    coords = np.asarray(coords, dtype=np.float64)
    return coords.reshape(coords.shape[0], -1)


def unflatten_poses(flat):
    flat = np.asarray(flat, dtype=np.float64)
    return flat.reshape(flat.shape[0], -1, 2)


# ---------------------------------------------------------------------------
# orientation heuristic


def _orientation_vectors(coords, schema):
    schema.require_orientation()
    v = coords[..., schema.nose_index, :] - coords[..., schema.neck_index, :]
    w = coords[..., schema.left_shoulder_index, :] - coords[..., schema.right_shoulder_index, :]
    return v, w


def sin_beta(pose, schema, eps=ORIENTATION_EPS):
    """Signed sine of the face/shoulder angle in the zx-plane.

    ``pose`` may be a :class:`Pose3D`, an ``(N, 3)`` array or a batch
    ``(..., N, 3)``; the result has the batch shape.
    """
    v, w = _orientation_vectors(_coords(pose), schema)
    num = v[..., 2] * w[..., 0] - v[..., 0] * w[..., 2]
    den = np.maximum(np.linalg.norm(v, axis=-1) * np.linalg.norm(w, axis=-1), eps)
    out = num / den
    return float(out) if np.ndim(out) == 0 else out


def orientation_degenerate(pose, schema, eps=ORIENTATION_EPS):
    """True where the face or shoulder vector is too short for a meaningful angle."""
    v, w = _orientation_vectors(_coords(pose), schema)
    return np.linalg.norm(v, axis=-1) * np.linalg.norm(w, axis=-1) < eps


def angle_loss(pose, schema, eps=ORIENTATION_EPS):
    """Hinge ``max(0, -sin_beta)``: zero for anatomically plausible facing."""
    s = sin_beta(pose, schema, eps)
    out = np.maximum(0.0, -np.asarray(s))
    return float(out) if np.ndim(out) == 0 else out


def sin_beta_nodes(p, z, schema, eps=ORIENTATION_EPS):
    """Differentiable :func:`sin_beta` for flattened batches; returns ``(B, 1)``."""
    schema.require_orientation()
    i_nose, i_neck = schema.nose_index, schema.neck_index
    i_ls, i_rs = schema.left_shoulder_index, schema.right_shoulder_index

    def diff(node, stride, offset, a, b):
        return ad.take_cols(node, [stride * a + offset]) - ad.take_cols(node, [stride * b + offset])

    vx, vy, vz = diff(p, 2, 0, i_nose, i_neck), diff(p, 2, 1, i_nose, i_neck), diff(z, 1, 0, i_nose, i_neck)
    wx, wy, wz = diff(p, 2, 0, i_ls, i_rs), diff(p, 2, 1, i_ls, i_rs), diff(z, 1, 0, i_ls, i_rs)
    num = vz * wx - vx * wz
    norm_v = ad.sqrt(vx * vx + vy * vy + vz * vz)
    norm_w = ad.sqrt(wx * wx + wy * wy + wz * wz)
    return num / ad.maximum(norm_v * norm_w, eps)


def angle_loss_nodes(p, z, schema, eps=ORIENTATION_EPS):
    """Per-sample hinge loss ``(B, 1)``; subgradient 0 at the hinge."""
    return ad.relu(-sin_beta_nodes(p, z, schema, eps))
