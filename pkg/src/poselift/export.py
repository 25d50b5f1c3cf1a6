"""Static skeleton geometry: JSON, Wavefront OBJ and multi-view SVG."""

import json

import numpy as np

from . import geometry as geo
from .errors import ConfigError, DataError

FORMATS = ("json3d", "obj", "svg")


def rotated_views(coords, step_deg):
    """2D projections of ``(N, 3)`` poses turned about the vertical axis.

    Returns ``(K, N, 2)`` with ``K = round(360 / step_deg)``; view ``k`` uses
    angle ``k * step_deg`` degrees.
    """
    if not step_deg > 0:
        raise ConfigError(f"rotation step must be positive, got {step_deg}")
    k = int(round(360.0 / step_deg))
    if k < 1:
        raise ConfigError(f"rotation step {step_deg} exceeds a full turn")
    coords = np.asarray(coords, dtype=np.float64)
    p, z = coords[:, :2], coords[:, 2]
    return np.stack([geo.rotate_project(p, z, np.deg2rad(i * step_deg)) for i in range(k)])


def _require_3d(dataset, fmt):
    if dataset.dims != 3:
        raise DataError(f"{fmt} export needs 3D poses, file has {dataset.dims}D poses")


def export_json3d(dataset, path):
    _require_3d(dataset, "json3d")
    s = dataset.schema
    doc = {
        "format": "poselift-json3d",
        "schema": s.name,
        "unit": dataset.unit,
        "joints": list(s.joint_names),
        "edges": [[s.joint_names[a], s.joint_names[b]] for a, b in s.edges],
        "poses": [{"id": i, "coords": c.tolist()} for i, c in zip(dataset.ids, dataset.poses)],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def export_obj(dataset, path):
    """One object per pose: N vertices and one line element per bone."""
    _require_3d(dataset, "obj")
    n = dataset.schema.num_joints
    out = [f"# {len(dataset)} poses, {n} joints each, schema {dataset.schema.name}"]
    for k, (pid, coords) in enumerate(zip(dataset.ids, dataset.poses)):
        out.append(f"o {pid}")
        out.extend(f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in coords)
        base = k * n + 1  # OBJ indices are 1-based and global
        out.extend(f"l {base + a} {base + b}" for a, b in dataset.schema.edges)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def _panel(views2d, edges, x0, y0, size, y_up, title):
    pts = views2d
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = max(float(np.max(hi - lo)), 1e-9)
    scale = 0.8 * size / span
    mid = (lo + hi) / 2

    def to_px(pt):
        x = x0 + size / 2 + (pt[0] - mid[0]) * scale
        dy = (pt[1] - mid[1]) * scale
        y = y0 + size / 2 + (-dy if y_up else dy)
        return x, y

    px = [to_px(p) for p in pts]
    parts = [f'<g class="panel"><title>{title}</title>']
    parts.append(f'<rect x="{x0}" y="{y0}" width="{size}" height="{size}" fill="none" stroke="#ccc"/>')
    for a, b in edges:
        (xa, ya), (xb, yb) = px[a], px[b]
        parts.append(f'<line x1="{xa:.2f}" y1="{ya:.2f}" x2="{xb:.2f}" y2="{yb:.2f}" stroke="#222" stroke-width="2"/>')
    for x, y in px:
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" fill="#c33"/>')
    parts.append("</g>")
    return "\n".join(parts)


def export_svg(dataset, path, rotate_every=None, max_poses=None, panel_size=160):
    """One row per pose; with ``rotate_every`` each row holds every rotated view.

    Without rotation a single panel shows the xy coordinates as stored.
    Pixel-unit poses are drawn with y pointing down, everything else y up.
    """
    if rotate_every is not None:
        _require_3d(dataset, "rotated svg")
    poses = dataset.poses if max_poses is None else dataset.poses[:max_poses]
    ids = dataset.ids[: len(poses)]
    y_up = dataset.unit != geo.RAW_PIXELS
    rows = []
    for pid, coords in zip(ids, poses):
        if rotate_every is None:
            rows.append((pid, [(0.0, coords[:, :2])]))
        else:
            views = rotated_views(coords, rotate_every)
            rows.append((pid, [(i * rotate_every, v) for i, v in enumerate(views)]))
    cols = max((len(r[1]) for r in rows), default=1)
    width, height = cols * panel_size, max(len(rows), 1) * panel_size
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    ]
    for r, (pid, views) in enumerate(rows):
        for c, (deg, pts) in enumerate(views):
            title = f"{pid} view {deg:g} deg"
            parts.append(_panel(pts, dataset.schema.edges, c * panel_size, r * panel_size, panel_size, y_up, title))
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


def export(dataset, path, fmt, rotate_every=None, max_poses=None):
    if fmt == "json3d":
        export_json3d(dataset, path)
    elif fmt == "obj":
        export_obj(dataset, path)
    elif fmt == "svg":
        export_svg(dataset, path, rotate_every=rotate_every, max_poses=max_poses)
    else:
        raise ConfigError(f"unknown export format {fmt!r}; choose from {', '.join(FORMATS)}")
