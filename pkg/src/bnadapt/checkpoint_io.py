"""Versioned binary checkpoint files.

Layout: magic bytes ``LBN1``, a 16-bit little-endian format version, a 32-bit
little-endian record count, then self-describing length-prefixed tensor
records. Every record is::

    name_len: uint16 LE | name: utf-8 | ndim: uint8 |
    dims: ndim * uint32 LE | payload: prod(dims) * float64 LE

Scalars are stored as 0-dimensional records. Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .bn import BnState
from .exceptions import (
    CheckpointMagicError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from .model import Checkpoint, ModelSpec

MAGIC = b"LBN1"
FORMAT_VERSION = 1


def _spec_records(spec: ModelSpec):
    yield "spec/input_dim", np.float64(spec.input_dim)
    yield "spec/hidden_dims", np.asarray(spec.hidden_dims, dtype=np.float64)
    yield "spec/n_queries", np.float64(spec.n_queries)
    yield "spec/n_classes", np.float64(spec.n_classes)


def _checkpoint_records(ckpt: Checkpoint):
    yield from _spec_records(ckpt.spec)
    for i, ((w, b), st) in enumerate(zip(ckpt.layers, ckpt.bn)):
        yield f"layer{i}/W", w
        yield f"layer{i}/b", b
        yield f"layer{i}/bn/mu_h", st.mu_h
        yield f"layer{i}/bn/var_h", st.var_h
        yield f"layer{i}/bn/gamma", st.gamma
        yield f"layer{i}/bn/beta", st.beta
        yield f"layer{i}/bn/phi_raw", np.float64(st.phi_raw)
        yield f"layer{i}/bn/eps", np.float64(st.eps)
    for q, (w, b) in enumerate(ckpt.heads):
        yield f"head{q}/W", w
        yield f"head{q}/b", b


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    records = list(_checkpoint_records(ckpt))
    parts = [MAGIC, struct.pack("<H", FORMAT_VERSION), struct.pack("<I", len(records))]
    for name, value in records:
        arr = np.asarray(value, dtype="<f8")
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0
        self.current = "<header>"

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointTruncatedError(
                f"file truncated while reading record {self.current!r}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out


def _read_records(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise CheckpointMagicError(
            f"bad magic {blob[:4]!r}; not a checkpoint file")
    r = _Reader(blob)
    r.pos = 4
    (version,) = struct.unpack("<H", r.take(2))
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"unsupported format version {version}, expected {FORMAT_VERSION}")
    (count,) = struct.unpack("<I", r.take(4))
    records: dict[str, np.ndarray] = {}
    for i in range(count):
        r.current = f"<record {i}>"
        (name_len,) = struct.unpack("<H", r.take(2))
        name = r.take(name_len).decode("utf-8")
        r.current = name
        (ndim,) = struct.unpack("<B", r.take(1))
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        n_items = int(np.prod(dims)) if ndim else 1
        payload = r.take(8 * n_items)
        records[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    return records


def load_checkpoint(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    records = _read_records(blob)

    def rec(name):
        if name not in records:
            raise CheckpointTruncatedError(f"missing record {name!r}")
        return records[name]

    spec = ModelSpec(
        input_dim=int(rec("spec/input_dim")),
        hidden_dims=tuple(int(h) for h in rec("spec/hidden_dims")),
        n_queries=int(rec("spec/n_queries")),
        n_classes=int(rec("spec/n_classes")),
    )
    layers, bn = [], []
    for i in range(len(spec.hidden_dims)):
        layers.append((rec(f"layer{i}/W"), rec(f"layer{i}/b")))
        bn.append(BnState(
            mu_h=rec(f"layer{i}/bn/mu_h"),
            var_h=rec(f"layer{i}/bn/var_h"),
            gamma=rec(f"layer{i}/bn/gamma"),
            beta=rec(f"layer{i}/bn/beta"),
            phi_raw=float(rec(f"layer{i}/bn/phi_raw")),
            eps=float(rec(f"layer{i}/bn/eps")),
        ))
    heads = [(rec(f"head{q}/W"), rec(f"head{q}/b")) for q in range(spec.n_queries)]
    return Checkpoint(spec, layers, bn, heads)
