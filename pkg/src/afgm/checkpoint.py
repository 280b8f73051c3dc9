"""Binary checkpoint serialization.

Layout, all integers little-endian, payloads float64 little-endian:

    magic b"AFGM" | u32 version | u32 tensor count
    per tensor, in inventory order:
        u16 name length | name UTF-8
        u16 role length | role UTF-8
        u8 rank | u64 extent per axis
    payloads, concatenated in the same order, C order

Round-trips are bit exact: the bytes written for a tensor are exactly the
bytes of its float64 buffer. Loading is strict; any inventory or shape
difference against the in-memory ParamSet raises instead of part-applying.
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import ConfigError, IngestionError
from .model import ParamSet

MAGIC = b"AFGM"
VERSION = 1


def _write_entry(out, name: str, role: str, arr: np.ndarray) -> None:
    nb = name.encode("utf-8")
    rb = role.encode("utf-8")
    if len(nb) > 0xFFFF or len(rb) > 0xFFFF:
        raise ConfigError(f"name/role too long to serialize: {name!r}")
    if arr.ndim > 0xFF:
        raise ConfigError(f"rank {arr.ndim} exceeds the format limit")
    out.write(struct.pack("<H", len(nb)))
    out.write(nb)
    out.write(struct.pack("<H", len(rb)))
    out.write(rb)
    out.write(struct.pack("<B", arr.ndim))
    for extent in arr.shape:
        out.write(struct.pack("<Q", extent))


def save_entries(path, entries: list) -> None:
    """Write [(name, role, array), ...] in the given order."""
    with open(path, "wb") as out:
        out.write(MAGIC)
        out.write(struct.pack("<II", VERSION, len(entries)))
        for name, role, arr in entries:
            _write_entry(out, name, role, np.asarray(arr, dtype=np.float64))
        for _, _, arr in entries:
            a = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
            out.write(a.astype("<f8", copy=False).tobytes())


def save(path, params: ParamSet) -> None:
    save_entries(path, [(n, e.role, e.tensor.data) for n, e in params.items()])


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise IngestionError(
                f"checkpoint {self.path} is truncated at byte {self.pos} "
                f"(wanted {n} more of {len(self.blob)})")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u(self, fmt: str) -> int:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]


def read_entries(path) -> list:
    """Read a checkpoint back as [(name, role, array), ...] in file order."""
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob, path)
    if r.take(4) != MAGIC:
        raise IngestionError(f"{path} is not a checkpoint (bad magic)")
    version = r.u("<I")
    if version != VERSION:
        raise IngestionError(
            f"{path}: unsupported checkpoint version {version} (have {VERSION})")
    count = r.u("<I")
    manifest = []
    for _ in range(count):
        name = r.take(r.u("<H")).decode("utf-8")
        role = r.take(r.u("<H")).decode("utf-8")
        rank = r.u("<B")
        shape = tuple(r.u("<Q") for _ in range(rank))
        manifest.append((name, role, shape))
    entries = []
    for name, role, shape in manifest:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = r.take(n * 8)
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        entries.append((name, role, arr))
    if r.pos != len(blob):
        raise IngestionError(
            f"{path}: {len(blob) - r.pos} trailing bytes after the last payload")
    return entries


def load(path, params: ParamSet) -> None:
    """Overwrite params from a checkpoint; inventories must match exactly."""
    entries = read_entries(path)
    roles = {name: role for name, role, _ in entries}
    for name, e in params.items():
        if name in roles and roles[name] != e.role:
            raise ConfigError(
                f"{path}: role mismatch for {name!r}: file says {roles[name]!r}, "
                f"model says {e.role!r}")
    params.load_arrays({name: arr for name, _, arr in entries})
