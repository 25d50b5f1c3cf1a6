"""Byte-deterministic checkpoint container.

Layout (all integers little-endian)::

    b"POSELIFT"                 8-byte magic
    uint32   format version     (currently 1)
    uint64   header length H
    H bytes  UTF-8 JSON header  (sorted keys)
    payload  float64 arrays, row-major, concatenated in header order

The header records the schema and its SHA-256, the TrainConfig, counters,
the RNG state and, for every array, its name, shape and byte offset into the
payload.  No timestamps are written, so identical training runs produce
identical files.
"""

import json
import struct

import numpy as np

from . import autodiff as ad
from . import nets
from .errors import DataError
from .geometry import SkeletonSchema

MAGIC = b"POSELIFT"
VERSION = 1


def _schema_from_dict(d):
    names = d["joints"]

    def idx(key):
        return None if d.get(key) is None else names.index(d[key])

    return SkeletonSchema(
        name=d["name"],
        joint_names=names,
        central_index=idx("central"),
        nose_index=idx("nose"),
        neck_index=idx("neck"),
        left_shoulder_index=idx("left_shoulder"),
        right_shoulder_index=idx("right_shoulder"),
        edges=[(names.index(a), names.index(b)) for a, b in d.get("edges", [])],
    )


def _net_arrays(prefix, params, adam):
    out = []
    for (name, p), opt in zip(params.named_parameters(), adam or [None] * 8):
        out.append((f"{prefix}.{name}", p.values))
        if opt is not None:
            out.append((f"{prefix}.{name}.m", opt.m))
            out.append((f"{prefix}.{name}.v", opt.v))
    return out


def save_checkpoint(path, state, config, schema, include_optimizer=True):
    arrays = _net_arrays("G", state.g_params, state.g_adam if include_optimizer else None)
    arrays += _net_arrays("D", state.d_params, state.d_adam if include_optimizer else None)
    tensors, offset = [], 0
    for name, arr in arrays:
        nbytes = arr.size * 8
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "dtype": "<f8"})
        offset += nbytes
    header = {
        "schema": schema.to_dict(),
        "schema_sha256": schema.digest(),
        "config": config.to_dict(),
        "network": {
            "hidden": state.g_params.hidden_width,
            "leaky_slope": state.g_params.leaky_slope,
            "skip": state.g_params.skip,
        },
        "epoch": state.epoch,
        "iteration": state.iteration,
        "rng_state": state.rng.bit_generator.state,
        "adam_t": {
            "G": [o.t for o in state.g_adam] if include_optimizer else None,
            "D": [o.t for o in state.d_adam] if include_optimizer else None,
        },
        "tensors": tensors,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes(order="C"))


def read_checkpoint(path):
    """Return ``(header, {name: array})`` without building any objects."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise DataError(f"{path}: not a poselift checkpoint")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[20 : 20 + hlen].decode("utf-8"))
    base = 20 + hlen
    arrays = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"])) if t["shape"] else 1
        start = base + t["offset"]
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=start).reshape(t["shape"])
        arrays[t["name"]] = arr.astype(np.float64, copy=True)
    return header, arrays


def load_checkpoint(path):
    """Rebuild ``(state, config, schema)`` from a checkpoint file."""
    from .training import TrainConfig, TrainState

    header, arrays = read_checkpoint(path)
    schema = _schema_from_dict(header["schema"])
    if schema.digest() != header["schema_sha256"]:
        raise DataError(f"{path}: schema hash mismatch")
    config = TrainConfig.from_dict(header["config"])
    net = header["network"]

    def build(prefix):
        layers = [
            (ad.parameter(arrays[f"{prefix}.W{i}"]), ad.parameter(arrays[f"{prefix}.b{i}"]))
            for i in range(1, nets.NUM_LAYERS + 1)
        ]
        params = nets.MlpParams(layers, net["hidden"], net["leaky_slope"], net["skip"])
        ts = header["adam_t"][prefix]
        if ts is None:
            return params, None
        adam = []
        for (name, _), t in zip(params.named_parameters(), ts):
            adam.append(
                ad.AdamState(
                    m=arrays[f"{prefix}.{name}.m"],
                    v=arrays[f"{prefix}.{name}.v"],
                    t=t,
                    learning_rate=config.learning_rate,
                    beta1=config.beta1,
                    beta2=config.beta2,
                    epsilon=config.adam_epsilon,
                )
            )
        return params, adam

    g, g_adam = build("G")
    d, d_adam = build("D")
    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng_state"]
    state = TrainState(g, d, g_adam, d_adam, rng, epoch=header["epoch"], iteration=header["iteration"])
    return state, config, schema
