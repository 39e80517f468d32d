"""Versioned binary checkpoint container.

Layout: 4-byte magic, uint32 format version, uint64 header length, UTF-8 JSON
header, then the raw tensor payload. Every tensor is stored as 32-bit
little-endian floats at an offset recorded in the header. Base weights,
adapter factors and teacher state live in separate name sections
("params/", "adapters/<target>/A|B", "teacher/", "center") so adapters can be
merged or dropped without touching the base weights.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import LoraAdapter

MAGIC = b"VADT"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: dict
    phase: str
    epoch: int
    step: int
    seed: int
    params: dict
    adapters: dict = field(default_factory=dict)
    teacher_params: dict | None = None
    center: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def _flatten(ckpt: Checkpoint) -> dict:
    tensors = {f"params/{k}": v for k, v in ckpt.params.items()}
    for target, ad in (ckpt.adapters or {}).items():
        tensors[f"adapters/{target}/A"] = ad.A
        tensors[f"adapters/{target}/B"] = ad.B
    for k, v in (ckpt.teacher_params or {}).items():
        tensors[f"teacher/{k}"] = v
    if ckpt.center is not None:
        tensors["center"] = ckpt.center
    return tensors


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = _flatten(ckpt)
    entries = []
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "<f4",
                        "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "config": ckpt.config,
        "phase": ckpt.phase,
        "epoch": ckpt.epoch,
        "step": ckpt.step,
        "seed": ckpt.seed,
        "meta": ckpt.meta,
        "tensors": entries,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint32(FORMAT_VERSION).tobytes())
        f.write(np.uint64(len(hbytes)).tobytes())
        f.write(hbytes)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    version = int(np.frombuffer(raw[4:8], dtype=np.uint32)[0])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    hlen = int(np.frombuffer(raw[8:16], dtype=np.uint64)[0])
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    payload = raw[16 + hlen:]

    params, adapters, teacher, center = {}, {}, {}, None
    for entry in header["tensors"]:
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype=entry["dtype"], offset=start,
                            count=int(np.prod(entry["shape"], dtype=np.int64)))
        arr = arr.reshape(entry["shape"]).astype(np.float32).copy()
        name = entry["name"]
        if name.startswith("params/"):
            params[name[len("params/"):]] = arr
        elif name.startswith("adapters/"):
            _, target, factor = name.split("/")
            ad = adapters.setdefault(target, {})
            ad[factor] = arr
        elif name.startswith("teacher/"):
            teacher[name[len("teacher/"):]] = arr
        elif name == "center":
            center = arr
        else:
            raise CheckpointError(f"unknown tensor section in {path}: {name}")
    adapter_objs = {t: LoraAdapter(A=d["A"], B=d["B"], target=t) for t, d in adapters.items()}
    return Checkpoint(config=header["config"], phase=header["phase"], epoch=header["epoch"],
                      step=header["step"], seed=header["seed"], params=params,
                      adapters=adapter_objs, teacher_params=teacher or None,
                      center=center, meta=header.get("meta", {}))
