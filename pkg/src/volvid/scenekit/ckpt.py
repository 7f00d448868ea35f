"""Versioned binary checkpoints.

Layout (little-endian): magic 'VVCK' | u32 version | u64 header_len |
header JSON | raw parameter payloads concatenated in manifest order.
The header echoes the config, bounds, frame count, the parameter manifest
(name, dtype, shape) and free-form metadata. Loading is total: missing or
extra parameters against the config echo are errors.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from ..config import ModelConfig
from ..model import VolvidModel
from ..renderer import SceneBounds

MAGIC = b"VVCK"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


@dataclass
class Checkpoint:
    config: ModelConfig
    bounds: SceneBounds
    n_frames: int
    params: dict  # name -> np.ndarray
    meta: dict


def checkpoint_of(model: VolvidModel, meta: dict = None) -> Checkpoint:
    params = {k: np.ascontiguousarray(v.data) for k, v in model.named_parameters().items()}
    return Checkpoint(model.cfg, model.bounds, model.n_frames, params, meta or {})


def save_checkpoint(ckpt, path):
    if isinstance(ckpt, VolvidModel):
        ckpt = checkpoint_of(ckpt)
    names = sorted(ckpt.params)
    manifest = []
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(ckpt.params[name])
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        manifest.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {
        "config": json.loads(ckpt.config.to_json()),
        "bounds": ckpt.bounds.to_dict(),
        "n_frames": ckpt.n_frames,
        "manifest": manifest,
        "meta": ckpt.meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, VERSION, len(hbytes)))
        f.write(hbytes)
        for b in blobs:
            f.write(b)
    return path


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _PREFIX.size:
        raise ValueError("checkpoint truncated: no header prefix")
    magic, version, hlen = _PREFIX.unpack(data[: _PREFIX.size])
    if magic != MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if len(data) < _PREFIX.size + hlen:
        raise ValueError("checkpoint truncated: header cut short")
    header = json.loads(data[_PREFIX.size : _PREFIX.size + hlen].decode("utf-8"))
    cfg = ModelConfig.from_json(json.dumps(header["config"]))
    bounds = SceneBounds.from_dict(header["bounds"])
    n_frames = int(header["n_frames"])
    params = {}
    off = _PREFIX.size + hlen
    for rec in header["manifest"]:
        dt = np.dtype(rec["dtype"])
        shape = tuple(rec["shape"])
        nbytes = dt.itemsize * int(np.prod(shape, dtype=np.int64))
        if off + nbytes > len(data):
            raise ValueError(f"checkpoint truncated inside parameter {rec['name']!r}")
        params[rec["name"]] = np.frombuffer(data[off : off + nbytes], dtype=dt).reshape(shape).copy()
        off += nbytes
    if off != len(data):
        raise ValueError(f"checkpoint has {len(data) - off} trailing bytes")
    return Checkpoint(config=cfg, bounds=bounds, n_frames=n_frames, params=params, meta=header["meta"])


def build_model(ckpt: Checkpoint) -> VolvidModel:
    """Instantiate a model of the echoed config and load every parameter."""
    model = VolvidModel(ckpt.config, ckpt.bounds, ckpt.n_frames, seed=0)
    expect = model.named_parameters()
    missing = sorted(set(expect) - set(ckpt.params))
    extra = sorted(set(ckpt.params) - set(expect))
    if missing or extra:
        raise ValueError(f"parameter set mismatch vs config echo: missing={missing} extra={extra}")
    for name, tensor in expect.items():
        arr = ckpt.params[name]
        if tuple(arr.shape) != tensor.shape:
            raise ValueError(
                f"parameter {name}: shape {arr.shape} != expected {tensor.shape}"
            )
        # keep the stored dtype so save -> load -> save is byte-identical
        tensor.data = arr.copy()
    model.invalidate_cache()
    return model


def load_model(path) -> VolvidModel:
    return build_model(load_checkpoint(path))
