"""Binary checkpoint format.

Layout (little-endian)::

    b"WENET1"
    u32   format version
    u32   n, then n bytes of UTF-8 JSON (config, epoch, optimizer step)
    u32   n, then n bytes of UTF-8 vocabulary text
    u32   tensor count
    per tensor:
        u32 n, n bytes of UTF-8 name
        u32 rank
        u64 x rank dims
        f64 x prod(dims) values, row-major

Model tensors are stored as ``model.<name>``; Adam moments as
``adam.m.<name>`` and ``adam.v.<name>``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .exceptions import BadMagicError, CheckpointError, TruncatedCheckpointError, VersionMismatchError
from .model import ModelParams
from .training import Checkpoint, OptimizerState, TrainConfig

MAGIC = b"WENET1"
FORMAT_VERSION = 1


def _pack_bytes(buf: bytearray, payload: bytes):
    buf += struct.pack("<I", len(payload))
    buf += payload


def to_bytes(ckpt: Checkpoint) -> bytes:
    header = {
        "config": ckpt.config.to_dict(),
        "epoch": ckpt.epoch,
        "optimizer_step": ckpt.optimizer.step,
    }
    tensors: list[tuple[str, np.ndarray]] = [
        (f"model.{name}", t.data) for name, t in ckpt.params.named_tensors().items()
    ]
    tensors += [(f"adam.m.{k}", a) for k, a in ckpt.optimizer.m.items()]
    tensors += [(f"adam.v.{k}", a) for k, a in ckpt.optimizer.v.items()]

    buf = bytearray(MAGIC)
    buf += struct.pack("<I", FORMAT_VERSION)
    _pack_bytes(buf, json.dumps(header, sort_keys=True).encode("utf-8"))
    _pack_bytes(buf, ckpt.vocab.to_text().encode("utf-8"))
    buf += struct.pack("<I", len(tensors))
    for name, arr in tensors:
        _pack_bytes(buf, name.encode("utf-8"))
        buf += struct.pack("<I", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        buf += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    return bytes(buf)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(
                f"checkpoint truncated: needed {n} bytes at offset {self.pos}, "
                f"only {len(self.data) - self.pos} left"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())


def from_bytes(data: bytes) -> Checkpoint:
    reader = _Reader(data)
    if len(data) < len(MAGIC):
        raise TruncatedCheckpointError("checkpoint shorter than its magic header")
    if reader.take(len(MAGIC)) != MAGIC:
        raise BadMagicError("not a wenet checkpoint (bad magic)")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, expected {FORMAT_VERSION}")
    try:
        header = json.loads(reader.blob().decode("utf-8"))
        vocab = Vocabulary.from_text(reader.blob().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None

    model, moments_m, moments_v = {}, {}, {}
    for _ in range(reader.u32()):
        name = reader.blob().decode("utf-8")
        rank = reader.u32()
        dims = struct.unpack(f"<{rank}Q", reader.take(8 * rank))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        values = np.frombuffer(reader.take(8 * count), dtype="<f8").astype(np.float64)
        arr = values.reshape(dims)
        for prefix, target in (("model.", model), ("adam.m.", moments_m), ("adam.v.", moments_v)):
            if name.startswith(prefix):
                target[name[len(prefix):]] = arr
                break
        else:
            raise CheckpointError(f"unexpected tensor {name!r} in checkpoint")
    if reader.pos != len(data):
        raise CheckpointError(f"{len(data) - reader.pos} trailing bytes after checkpoint")

    config = TrainConfig.from_dict(header["config"])
    params = ModelParams.from_named(model)
    optimizer = OptimizerState(moments_m, moments_v, int(header["optimizer_step"]))
    return Checkpoint(config, vocab, params, optimizer, int(header["epoch"]))


def save_checkpoint(ckpt: Checkpoint, path):
    Path(path).write_bytes(to_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
