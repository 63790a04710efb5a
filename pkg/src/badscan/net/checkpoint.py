"""Versioned binary checkpoint container.

Layout (all little-endian)::

    b"BSCNCKPT"            magic, 8 bytes
    u16 version            currently 1
    u32 n                  length of the JSON config block
    n bytes                UTF-8 JSON: model config, trigger spec, scan plan, dtype, tensor shapes
    weight arrays          float32 (or float64 when the config says so), declaration order
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from ..bitplane import TriggerSpec
from ..imagecore import PatchLoc
from ..scanlib import ScanPlan
from .model import ModelConfig, VssModel, param_names

MAGIC = b"BSCNCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _header(model: VssModel) -> dict:
    spec = model.trigger_spec
    plan = model.badscan_plan
    return {
        "config": asdict(model.config),
        "trigger": None if spec is None else {
            "loc_i": [spec.loc_i.row, spec.loc_i.col],
            "loc_j": [spec.loc_j.row, spec.loc_j.col],
            "patch_size": spec.patch_size, "k": spec.k, "channels": spec.channels,
        },
        "plan": None if plan is None else {
            "kind": plan.kind.value, "drop_rate": plan.drop_rate, "seed": int(plan.seed),
        },
        "badscan_blocks": None if model.badscan_blocks is None else list(model.badscan_blocks),
        "shapes": {n: list(model.params[n].shape) for n in param_names(model.config)},
    }


def dumps(model: VssModel) -> bytes:
    dt = np.dtype(model.config.dtype).newbyteorder("<")
    meta = json.dumps(_header(model), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", VERSION, len(meta)), meta]
    for n in param_names(model.config):
        parts.append(np.ascontiguousarray(model.params[n], dtype=dt).tobytes())
    return b"".join(parts)


def loads(data: bytes) -> VssModel:
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic bytes)")
    version, n = struct.unpack_from("<HI", data, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    offset = 8 + struct.calcsize("<HI")
    meta = json.loads(data[offset:offset + n].decode("utf-8"))
    offset += n
    config = ModelConfig(**meta["config"])
    dt = np.dtype(config.dtype).newbyteorder("<")
    params = {}
    for name in param_names(config):
        shape = tuple(meta["shapes"][name])
        count = int(np.prod(shape))
        end = offset + count * dt.itemsize
        if end > len(data):
            raise CheckpointError(f"checkpoint truncated inside tensor {name}")
        params[name] = np.frombuffer(data[offset:end], dtype=dt).reshape(shape).astype(config.dtype)
        offset = end
    if offset != len(data):
        raise CheckpointError("trailing bytes after the last tensor")
    trig = meta["trigger"]
    spec = None if trig is None else TriggerSpec(
        PatchLoc(*trig["loc_i"]), PatchLoc(*trig["loc_j"]), trig["patch_size"], trig["k"], trig["channels"])
    plan = None if meta["plan"] is None else ScanPlan(**meta["plan"])
    blocks = meta["badscan_blocks"]
    return VssModel(config, params, spec, plan, None if blocks is None else tuple(blocks))


def save_checkpoint(model: VssModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load_checkpoint(path) -> VssModel:
    with open(path, "rb") as fh:
        return loads(fh.read())
