"""MPJPE / PCK metrics, the zero-depth reference predictor and eval reports.

All metrics re-center both poses on the central joint first, so absolute
translation never counts.  Functions accept a single ``(N, 3)`` pose (or
:class:`~poselift.geometry.Pose3D`) and return a float, or a batch
``(M, N, 3)`` and return an ``(M,)`` array.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import AlignmentError, DataError

RELATIVE = "relative"
SCALE_ALIGN = "scale-align"
MODES = (RELATIVE, SCALE_ALIGN)

# column order of the standard Human3.6M action tables
H36M_ACTIONS = (
    "Directions",
    "Discussion",
    "Eating",
    "Greeting",
    "Phoning",
    "Photo",
    "Posing",
    "Purchases",
    "Sitting",
    "SittingDown",
    "Smoking",
    "Waiting",
    "WalkDog",
    "Walking",
    "WalkTogether",
)


def _arr(pose):
    return pose.coords if isinstance(pose, (geo.Pose2D, geo.Pose3D)) else np.asarray(pose, dtype=np.float64)


def _scalar_or_array(x, single):
    return float(x[0]) if single else x


def _centered_pair(pred, gt, central_index):
    pred, gt = _arr(pred), _arr(gt)
    if pred.shape != gt.shape:
        raise DataError(f"pose shapes differ: {pred.shape} vs {gt.shape}")
    single = pred.ndim == 2
    if single:
        pred, gt = pred[None], gt[None]
    pred = pred - pred[:, central_index : central_index + 1]
    gt = gt - gt[:, central_index : central_index + 1]
    return pred, gt, single


def optimal_scale(pred, gt):
    """Per-pose scalar ``s`` minimizing ``||s * pred - gt||^2`` for ``(M, N, D)`` inputs."""
    denom = np.sum(pred * pred, axis=(1, 2))
    if np.any(denom == 0):
        raise AlignmentError("cannot scale-align a prediction with zero norm")
    return np.sum(pred * gt, axis=(1, 2)) / denom


def joint_errors(pred, gt, mode=RELATIVE, central_index=0):
    """Per-joint Euclidean errors ``(M, N)`` after centering (and optional alignment)."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    pred, gt, _ = _centered_pair(pred, gt, central_index)
    if mode == SCALE_ALIGN:
        pred = pred * optimal_scale(pred, gt)[:, None, None]
    return np.linalg.norm(pred - gt, axis=2)


def mpjpe(pred, gt, mode=RELATIVE, central_index=0):
    """Mean per-joint position error relative to the central joint."""
    single = _arr(pred).ndim == 2
    return _scalar_or_array(joint_errors(pred, gt, mode, central_index).mean(axis=1), single)


def pck(pred, gt, threshold, central_index=0):
    """Fraction of joints whose error is strictly below ``threshold``.

    The central joint is the reference point and always has zero error, so it
    is left out of the count.
    """
    single = _arr(pred).ndim == 2
    err = np.delete(joint_errors(pred, gt, RELATIVE, central_index), central_index, axis=1)
    return _scalar_or_array(np.mean(err < threshold, axis=1), single)


def zero_depth_baseline(p):
    """Lift a 2D pose by setting every depth to zero."""
    coords = _arr(p)
    out = np.zeros(coords.shape[:-1] + (3,))
    out[..., :2] = coords
    if isinstance(p, geo.Pose2D):
        return geo.Pose3D(out, p.unit)
    return out


def flip_depth(pose):
    coords = np.array(_arr(pose), dtype=np.float64)
    coords[..., 2] *= -1.0
    return geo.Pose3D(coords, pose.unit) if isinstance(pose, geo.Pose3D) else coords


def flip_diagnostic(pred, gt, mode=RELATIVE, central_index=0):
    """``(error of pred, error of pred with negated depth)``."""
    return mpjpe(pred, gt, mode, central_index), mpjpe(flip_depth(pred), gt, mode, central_index)


# ---------------------------------------------------------------------------
# dataset-level reports


@dataclass
class EvalReport:
    per_pose: np.ndarray
    mean: float
    unit: str
    mode: str
    ids: list = None
    actions: list = None
    pck_threshold: float = None
    per_pose_pck: np.ndarray = None
    extras: dict = field(default_factory=dict)

    def per_action(self):
        """``{action: mean error}`` in table column order (empty without labels)."""
        if self.actions is None:
            return {}
        labels = np.asarray(self.actions)
        known = [a for a in H36M_ACTIONS if a in set(self.actions)]
        rest = sorted(set(self.actions) - set(known))
        return {a: float(self.per_pose[labels == a].mean()) for a in known + rest}

    @property
    def pck(self):
        return None if self.per_pose_pck is None else float(self.per_pose_pck.mean())

    def summary(self):
        out = {
            "kind": "eval-summary",
            "mode": self.mode,
            "unit": self.unit,
            "count": int(len(self.per_pose)),
            "mean": self.mean,
        }
        if self.per_pose_pck is not None:
            out["pck_threshold"] = self.pck_threshold
            out["pck"] = self.pck
        acts = self.per_action()
        if acts:
            out["per_action"] = acts
            out["action_average"] = float(np.mean(list(acts.values())))
        out.update(self.extras)
        return out

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(self.summary()) + "\n")
            for i, err in enumerate(self.per_pose):
                rec = {"kind": "pose", "id": self.ids[i] if self.ids else str(i), "error": float(err)}
                if self.actions is not None:
                    rec["action"] = self.actions[i]
                if self.per_pose_pck is not None:
                    rec["pck"] = float(self.per_pose_pck[i])
                fh.write(json.dumps(rec) + "\n")

    def format_table(self, label="Ours"):
        """Plain-text table; per-action columns plus Avg when labels exist."""
        lines = [f"MPJPE ({self.mode}, {self.unit}) over {len(self.per_pose)} poses: {self.mean:.4f}"]
        if self.per_pose_pck is not None:
            lines.append(f"PCK@{self.pck_threshold:g}: {100 * self.pck:.1f}")
        for key, val in self.extras.items():
            lines.append(f"{key}: {val:.4f}" if isinstance(val, float) else f"{key}: {val}")
        acts = self.per_action()
        if acts:
            names = list(acts) + ["Avg"]
            vals = list(acts.values()) + [float(np.mean(list(acts.values())))]
            width = max(8, max(len(n) for n in names) + 1)
            lines.append("Method".ljust(12) + "".join(n.rjust(width) for n in names))
            lines.append(label.ljust(12) + "".join(f"{v:.1f}".rjust(width) for v in vals))
        return "\n".join(lines)


def evaluate(pred, gt, mode=RELATIVE, pck_threshold=None):
    """Compare two 3D :class:`~poselift.dataio.PoseDataset` objects pose by pose.

    If the ground truth is in raw units and the prediction is normalized,
    the prediction is rescaled with its own per-pose normalization scale
    (the 2D record of its input) before comparison.
    """
    if pred.dims != 3 or gt.dims != 3:
        raise DataError("evaluation needs 3D pose files for both prediction and ground truth")
    if len(pred) != len(gt):
        raise DataError(f"prediction has {len(pred)} poses, ground truth {len(gt)}")
    if pred.schema.joint_names != gt.schema.joint_names:
        raise DataError("prediction and ground truth use different joint layouts")
    central = gt.schema.central_index
    if gt.unit == geo.NORMALIZED or pred.unit != geo.NORMALIZED:
        if pred.unit != gt.unit:
            raise DataError(f"unit mismatch: prediction {pred.unit!r}, ground truth {gt.unit!r}")
        p, g, unit = pred.poses, gt.poses, gt.unit
    else:
        if pred.scales is None:
            raise DataError("normalized prediction lacks normalization records; cannot map to ground-truth units")
        p = (pred.poses - pred.poses[:, central : central + 1]) * pred.scales[:, None, None]
        g, unit = gt.poses, gt.unit

    errors = mpjpe(p, g, mode, central)
    report = EvalReport(
        per_pose=errors,
        mean=float(errors.mean()),
        unit=unit,
        mode=mode,
        ids=list(gt.ids),
        actions=gt.actions if gt.actions is not None else pred.actions,
    )
    if pck_threshold is not None:
        report.pck_threshold = float(pck_threshold)
        report.per_pose_pck = pck(p, g, pck_threshold, central)
    base = mpjpe(zero_depth_baseline(p[..., :2]), g, mode, central)
    report.extras["zero_depth_mean"] = float(base.mean())
    own, flipped = flip_diagnostic(p, g, mode, central)
    report.extras["flipped_depth_mean"] = float(flipped.mean())
    report.extras["best_of_flip_mean"] = float(np.minimum(own, flipped).mean())
    if gt.schema.has_orientation:
        report.extras["inverted_fraction"] = float(np.mean(geo.sin_beta(p, gt.schema) < 0))
    return report
