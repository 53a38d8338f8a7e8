"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"SLAD" | u32 version | u32 n_sections | sections...
    section := u32 name_len | name (utf-8) | u64 payload_len | payload

The ``meta`` section is UTF-8 JSON.  Parameter sections (``theta``,
``theta_minus``) hold a u32 tensor count followed by, per tensor,
``u32 name_len | name | u32 ndim | u32 dims... | float32 data``.
Tensors are stored as 32-bit floats and upcast to float64 on load.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"SLAD"
VERSION = 1
_F32 = np.dtype("<f4")


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    meta: dict
    theta: dict[str, np.ndarray]
    theta_minus: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def config_hash(self) -> str | None:
        return self.meta.get("config_hash")


def _pack_params(params: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(struct.pack("<I", len(params)))
    for name in sorted(params):
        arr = np.asarray(params[name], dtype=np.float64)
        key = name.encode()
        buf.write(struct.pack("<I", len(key)) + key)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype=_F32).tobytes())
    return buf.getvalue()


def _unpack_params(blob: bytes) -> dict[str, np.ndarray]:
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated tensor section")
        out = view[pos:pos + n]
        pos += n
        return out

    (count,) = struct.unpack("<I", take(4))
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = bytes(take(nlen)).decode()
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(bytes(take(4 * size)), dtype=_F32).reshape(shape)
        params[name] = data.astype(np.float64)
    if pos != len(view):
        raise CheckpointError("trailing bytes in tensor section")
    return params


def to_bytes(ckpt: Checkpoint) -> bytes:
    sections = [("meta", json.dumps(ckpt.meta, sort_keys=True, separators=(",", ":")).encode()),
                ("theta", _pack_params(ckpt.theta))]
    if ckpt.theta_minus:
        sections.append(("theta_minus", _pack_params(ckpt.theta_minus)))
    out = io.BytesIO()
    out.write(MAGIC + struct.pack("<II", VERSION, len(sections)))
    for name, payload in sections:
        key = name.encode()
        out.write(struct.pack("<I", len(key)) + key + struct.pack("<Q", len(payload)) + payload)
    return out.getvalue()


def from_bytes(blob: bytes) -> Checkpoint:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    if len(blob) < 12:
        raise CheckpointError("truncated header")
    version, n = struct.unpack("<II", blob[4:12])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    sections = {}
    for _ in range(n):
        try:
            (nlen,) = struct.unpack_from("<I", blob, pos)
            name = blob[pos + 4:pos + 4 + nlen].decode()
            pos += 4 + nlen
            (plen,) = struct.unpack_from("<Q", blob, pos)
        except struct.error as exc:
            raise CheckpointError("truncated section header") from exc
        pos += 8
        if pos + plen > len(blob):
            raise CheckpointError(f"section {name!r} is truncated")
        sections[name] = blob[pos:pos + plen]
        pos += plen
    if pos != len(blob):
        raise CheckpointError("trailing bytes after last section")
    if "meta" not in sections or "theta" not in sections:
        raise CheckpointError("checkpoint lacks meta or theta")
    meta = json.loads(sections["meta"].decode())
    theta = _unpack_params(sections["theta"])
    theta_minus = _unpack_params(sections["theta_minus"]) if "theta_minus" in sections else {}
    return Checkpoint(meta, theta, theta_minus)


def save(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load(path, expect_hash: str | None = None, expect_embedding: str | None = None) -> Checkpoint:
    """Read a checkpoint, refusing it when the recorded hash or embedding tag disagrees."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    ckpt = from_bytes(p.read_bytes())
    if expect_hash is not None and ckpt.config_hash != expect_hash:
        raise CheckpointError(f"config hash mismatch: checkpoint {ckpt.config_hash}, expected {expect_hash}")
    if expect_embedding is not None and ckpt.meta.get("embedding") != expect_embedding:
        raise CheckpointError(f"embedding convention {ckpt.meta.get('embedding')!r} != {expect_embedding!r}")
    return ckpt


def round_f32(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """What a save/load cycle returns for ``params``."""
    return {k: np.asarray(v, dtype=_F32).astype(np.float64) for k, v in params.items()}
