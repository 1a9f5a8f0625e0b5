"""Binary checkpoint format for :class:`ModelState`.

Layout (little-endian)::

    b"GDL1"  u32 n_entries
    n_entries x [u32 name_len, name (utf-8), u32 rank, u32 dim * rank, f64 payload]
    u64 step  f64 ppl_running_mean  u32 json_len  config JSON (utf-8)

Entry names are prefixed ``G/``, ``D/``, ``Gema/`` and ``opt/`` and keep
the insertion order of the state's dictionaries, so a load/save round
trip reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..autograd import Tensor
from ..screen.io import atomic_write_bytes
from .config import GanConfig
from .training import ModelState

MAGIC = b"GDL1"
_SECTIONS = (("G/", "generator"), ("D/", "critic"), ("Gema/", "ema_generator"), ("opt/", "moments"))


class CheckpointError(ValueError):
    pass


def _array(v):
    return v.data if isinstance(v, Tensor) else np.asarray(v, dtype=np.float64)


def encode_state(state):
    entries = []
    for prefix, attr in _SECTIONS:
        for name, value in getattr(state, attr).items():
            entries.append((prefix + name, _array(value)))
    out = [MAGIC, struct.pack("<I", len(entries))]
    for name, arr in entries:
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    blob = json.dumps(state.config.to_dict(), sort_keys=True).encode("utf-8")
    out.append(struct.pack("<QdI", state.step, state.ppl_running_mean, len(blob)))
    out.append(blob)
    return b"".join(out)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_state(data):
    r = _Reader(bytes(data))
    if r.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic")
    (count,) = r.unpack("<I")
    sections = {attr: {} for _, attr in _SECTIONS}
    for _ in range(count):
        (n,) = r.unpack("<I")
        name = r.take(n).decode("utf-8")
        (rank,) = r.unpack("<I")
        shape = r.unpack(f"<{rank}I")
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
        for prefix, attr in _SECTIONS:
            if name.startswith(prefix):
                sections[attr][name[len(prefix):]] = arr
                break
        else:
            raise CheckpointError(f"unknown checkpoint entry {name!r}")
    step, ppl_mean, n = r.unpack("<QdI")
    config = GanConfig.from_dict(json.loads(r.take(n).decode("utf-8")))
    if r.pos != len(r.data):
        raise CheckpointError(f"{len(r.data) - r.pos} trailing bytes after checkpoint")

    def params(d, trainable):
        return {k: Tensor(v, requires_grad=trainable) for k, v in d.items()}

    return ModelState(config, params(sections["generator"], True), params(sections["critic"], True),
                      params(sections["ema_generator"], False), sections["moments"], ppl_mean, step)


def save_checkpoint(state, path):
    atomic_write_bytes(Path(path), encode_state(state))


def load_checkpoint(path):
    return decode_state(Path(path).read_bytes())
