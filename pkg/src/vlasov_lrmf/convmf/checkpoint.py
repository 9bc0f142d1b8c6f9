"""CMF1 checkpoint files.

Layout (little-endian, no padding)::

    b"CMF1" u32 version u32 m u32 n u32 rank u32 tensor_count
    tensor_count x { u16 name_len, name (ASCII), u8 ndim, ndim x u32 dims, f64 values }
    UTF-8 JSON hyperparameters up to end of file
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import ConvMFModel, Hyperparameters

MAGIC = b"CMF1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: ConvMFModel) -> None:
    parts = [_HEADER.pack(MAGIC, VERSION, model.m, model.n, model.rank, len(model.params))]
    for name, arr in model.params.items():
        encoded = name.encode("ascii")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    parts.append(json.dumps(model.hyper.to_dict(), sort_keys=True).encode("utf-8"))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated file at byte {self.pos}, wanted {n} more")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, model: ConvMFModel | None = None, rank: int | None = None) -> ConvMFModel:
    """Read a checkpoint.

    With ``model`` given, its parameters are replaced in place after checking
    that the stored architecture matches; otherwise a model is rebuilt from the
    stored hyperparameters. ``rank`` rejects checkpoints of any other rank.
    """
    with open(path, "rb") as fh:
        rd = _Reader(fh.read(), path)
    magic, version, m, n, ck_rank, count = rd.unpack(_HEADER.format)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = rd.unpack("<H")
        try:
            name = rd.take(name_len).decode("ascii")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{path}: tensor name is not ASCII") from exc
        (ndim,) = rd.unpack("<B")
        dims = rd.unpack(f"<{ndim}I")
        size = int(np.prod(dims)) if ndim else 1
        tensors[name] = np.frombuffer(rd.take(8 * size), dtype="<f8").reshape(dims).astype(np.float64)
    try:
        hyper = Hyperparameters.from_dict(json.loads(rd.data[rd.pos :].decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise CheckpointError(f"{path}: unreadable hyperparameter block ({exc})") from exc
    if hyper.rank != ck_rank:
        raise CheckpointError(f"{path}: header rank {ck_rank} disagrees with hyperparameters ({hyper.rank})")
    if rank is not None and rank != ck_rank:
        raise CheckpointError(f"{path}: checkpoint has rank {ck_rank}, requested {rank}")
    if model is not None:
        if (model.m, model.n, model.rank) != (m, n, ck_rank):
            raise CheckpointError(
                f"{path}: checkpoint is {m}x{n} rank {ck_rank}, model is {model.m}x{model.n} rank {model.rank}"
            )
        _check_against(model.param_shapes, tensors, path)
        model.params = tensors
        return model
    try:
        return ConvMFModel(m, n, hyper, params=tensors)
    except ValueError as exc:
        raise CheckpointError(f"{path}: tensors do not match declared architecture ({exc})") from exc


def _check_against(shapes, tensors, path):
    if list(shapes) != list(tensors):
        raise CheckpointError(f"{path}: tensor names do not match the model")
    for name, shape in shapes.items():
        if tensors[name].shape != tuple(shape):
            raise CheckpointError(f"{path}: {name} has shape {tensors[name].shape}, model expects {tuple(shape)}")
