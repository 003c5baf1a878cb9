"""
Binary checkpoint: model manifest, every named parameter and BN running statistic,
and the Adam moments, all as little-endian float32.

    magic "XVIEWCKP" | u32 version | u64 adam step | f64 lr
    u32 manifest length | manifest (YAML, UTF-8)
    u32 entry count | entries

Each entry is u16 name length, name, u8 ndim, ndim x u32 dims, float32 data.
Adam entries are named "adam.exp_avg/<param>" and "adam.exp_avg_sq/<param>".
"""

from __future__ import annotations

import struct
from typing import Optional

import numpy as np
import torch
import yaml

from .autonn import ADAM_LR, adam_step_count, make_optimizer
from .errors import FormatError
from .model import SiameseModel, model_from_manifest, model_manifest

CHECKPOINT_MAGIC = b"XVIEWCKP"
CHECKPOINT_VERSION = 1
_HEAD = struct.Struct("<8sIQd")

_EXP_AVG = "adam.exp_avg/"
_EXP_AVG_SQ = "adam.exp_avg_sq/"


def _pack_entry(name: str, tensor: torch.Tensor) -> bytes:
    raw_name = name.encode("utf-8")
    arr = tensor.detach().cpu().numpy().astype("<f4", copy=False)
    head = struct.pack("<H", len(raw_name)) + raw_name + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr).tobytes()


def save_checkpoint(
    path: str,
    model: SiameseModel,
    optimizer: Optional[torch.optim.Adam] = None,
    scheme_name: Optional[str] = None,
) -> None:
    manifest = model_manifest(model, scheme_name)
    manifest_text = yaml.safe_dump(manifest, sort_keys=True).encode("utf-8")

    entries: list[tuple[str, torch.Tensor]] = list(model.state_dict().items())
    lr = ADAM_LR
    step = 0
    if optimizer is not None:
        lr = float(optimizer.param_groups[0]["lr"])
        step = adam_step_count(optimizer)
        for name, p in model.named_parameters():
            state = optimizer.state.get(p)
            if state:
                entries.append((_EXP_AVG + name, state["exp_avg"]))
                entries.append((_EXP_AVG_SQ + name, state["exp_avg_sq"]))

    parts = [
        _HEAD.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, step, lr),
        struct.pack("<I", len(manifest_text)),
        manifest_text,
        struct.pack("<I", len(entries)),
    ]
    parts.extend(_pack_entry(name, t) for name, t in entries)
    with open(path, "wb") as f:
        f.write(b"".join(parts))
    with open(path + ".manifest.yaml", "w", encoding="utf-8") as f:
        f.write(manifest_text.decode("utf-8"))


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, fmt: str) -> tuple:
        try:
            values = struct.unpack_from(fmt, self.data, self.offset)
        except struct.error:
            raise FormatError(f"{self.path}: truncated checkpoint") from None
        self.offset += struct.calcsize(fmt)
        return values

    def raw(self, n: int) -> bytes:
        chunk = self.data[self.offset:self.offset + n]
        if len(chunk) != n:
            raise FormatError(f"{self.path}: truncated checkpoint")
        self.offset += n
        return chunk


def load_checkpoint(path: str, dtype: torch.dtype = torch.float32) -> tuple[SiameseModel, torch.optim.Adam, dict]:
    """Rebuild the model and its optimizer exactly as saved. Returns (model, optimizer, manifest)."""
    with open(path, "rb") as f:
        reader = _Reader(f.read(), path)
    magic, version, step, lr = reader.take(_HEAD.format)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (manifest_len,) = reader.take("<I")
    try:
        manifest = yaml.safe_load(reader.raw(manifest_len).decode("utf-8"))
    except (UnicodeDecodeError, yaml.YAMLError) as e:
        raise FormatError(f"{path}: unreadable model manifest ({e})") from None
    if not isinstance(manifest, dict):
        raise FormatError(f"{path}: model manifest is not a mapping")

    tensors: dict[str, torch.Tensor] = {}
    (count,) = reader.take("<I")
    for _ in range(count):
        (name_len,) = reader.take("<H")
        name = reader.raw(name_len).decode("utf-8", errors="replace")
        (ndim,) = reader.take("<B")
        shape = reader.take(f"<{ndim}I") if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(reader.raw(n * 4), dtype="<f4").reshape(shape)
        tensors[name] = torch.from_numpy(arr.astype(np.float32)).to(dtype)
    if reader.offset != len(reader.data):
        raise FormatError(f"{path}: {len(reader.data) - reader.offset} trailing bytes")

    model = model_from_manifest(manifest, dtype=dtype)
    state = {k: v for k, v in tensors.items() if not k.startswith("adam.")}
    expected = model.state_dict()
    if set(state) != set(expected):
        missing = sorted(set(expected) - set(state))
        raise FormatError(f"{path}: checkpoint does not match its manifest (missing {missing[:3]})")
    for k, v in state.items():
        if v.shape != expected[k].shape:
            raise FormatError(f"{path}: {k} has shape {tuple(v.shape)}, expected {tuple(expected[k].shape)}")
    model.load_state_dict(state)

    optimizer = make_optimizer(model.parameters(), lr=lr)
    for name, p in model.named_parameters():
        exp_avg, exp_avg_sq = tensors.get(_EXP_AVG + name), tensors.get(_EXP_AVG_SQ + name)
        if exp_avg is None and exp_avg_sq is None:
            continue
        if exp_avg is None or exp_avg_sq is None:
            raise FormatError(f"{path}: Adam state for {name} needs both exp_avg and exp_avg_sq")
        if exp_avg.shape != p.shape or exp_avg_sq.shape != p.shape:
            raise FormatError(f"{path}: Adam state for {name} does not match shape {tuple(p.shape)}")
        optimizer.state[p] = {
            "step": torch.tensor(float(step)),
            "exp_avg": exp_avg.clone(),
            "exp_avg_sq": exp_avg_sq.clone(),
        }
    return model, optimizer, manifest
