"""Binary APR files (``APRB`` v1) and raw volume files with a text header.

See ``docs/FORMATS.md`` for the byte layouts.  All integers and floats are
little-endian regardless of the host.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .core import APR, BuildInfo, LinearAccess, validate
from .exceptions import (FormatError, MagicError, SizeMismatchError, TruncationError,
                         ValidationFailed)
from .tree import fill_tree

MAGIC = b"APRB"
VERSION = 1
_HEADER = struct.Struct("<4sBBBB3Qd")
_ACCESS = struct.Struct("<hhQQ")

RAW_MAGIC = "RAWVOL 1"
RAW_TYPES = {"u8": np.dtype("<u1"), "u16": np.dtype("<u2"), "f32": np.dtype("<f4")}


def access_array_bytes(access: LinearAccess) -> int:
    """Serialized size of the arrays of one structure (dims, offsets, rows, y-indices)."""
    n_levels = access.level_max + 1
    return (3 * 8 * max(n_levels, 0) + 8 * access.level_offset.size
            + 8 * access.n_rows + 2 * access.n_particles)


def header_bytes() -> int:
    return _HEADER.size + 2 * _ACCESS.size


def _write_access(fh, access: LinearAccess):
    n_levels = max(access.level_max + 1, 0)
    fh.write(_ACCESS.pack(access.level_min, access.level_max, access.n_rows, access.n_particles))
    dims = np.stack([access.z_dim, access.x_dim, access.y_dim], axis=1).reshape(-1)
    fh.write(dims.astype("<u8").tobytes())
    assert dims.size == 3 * n_levels
    fh.write(access.level_offset.astype("<u8").tobytes())
    fh.write(access.xz_end.astype("<u8").tobytes())
    fh.write(access.y_idx.astype("<u2").tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncationError(f"file truncated: needed {n} bytes at offset {self.pos}, "
                                  f"{len(self.data) - self.pos} left")
        out = self.data[self.pos: self.pos + n]
        self.pos += n
        return out

    def array(self, dtype, count):
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(dtype.itemsize * count), dtype=dtype).copy()


def _read_access(rd: _Reader) -> LinearAccess:
    level_min, level_max, n_rows, n_particles = _ACCESS.unpack(rd.take(_ACCESS.size))
    n_levels = max(level_max + 1, 0)
    if level_max < -1 or level_max > 40 or level_min < 0:
        raise FormatError(f"implausible level range [{level_min}, {level_max}]")
    dims = rd.array("<u8", 3 * n_levels).reshape(n_levels, 3).astype(np.int64)
    level_offset = rd.array("<u8", n_levels + 1).astype(np.uint64)
    xz_end = rd.array("<u8", n_rows).astype(np.uint64)
    y_idx = rd.array("<u2", n_particles).astype(np.uint16)
    return LinearAccess(level_min, level_max, dims[:, 0].copy(), dims[:, 1].copy(),
                        dims[:, 2].copy(), y_idx, xz_end, level_offset)


def write_apr(path, apr: APR, values, tree_values=None):
    """Write leaves, tree and values (float32) to ``path``."""
    values = np.asarray(values)
    if values.shape != (apr.n_particles,):
        raise ValueError(f"expected {apr.n_particles} values, got {values.shape}")
    if tree_values is None:
        tree_values = fill_tree(apr, values)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, apr.l_min, apr.l_max, 0,
                              *apr.source_dims, float(apr.params.E)))
        _write_access(fh, apr.access)
        fh.write(values.astype("<f4").tobytes())
        _write_access(fh, apr.tree_access)
        fh.write(np.asarray(tree_values).astype("<f4").tobytes())


def read_apr(path):
    """Read an ``APRB`` file; returns ``(APR, values, tree_values)``.

    Raises
    ------
    MagicError, TruncationError, FormatError, ValidationFailed
    """
    with open(path, "rb") as fh:
        data = fh.read()
    rd = _Reader(data)
    if len(data) < _HEADER.size:
        if not MAGIC.startswith(data[:4]) or len(data) < 4:
            raise MagicError("not an APRB file") if data[:4] != MAGIC[: len(data[:4])] \
                else TruncationError("file truncated inside the header")
        raise TruncationError("file truncated inside the header")
    magic, version, l_min, l_max, _, sz, sx, sy, E = _HEADER.unpack(rd.take(_HEADER.size))
    if magic != MAGIC:
        raise MagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise MagicError(f"unsupported version {version}")
    access = _read_access(rd)
    values = rd.array("<f4", access.n_particles)
    tree_access = _read_access(rd)
    tree_values = rd.array("<f4", tree_access.n_particles)
    if rd.pos != len(data):
        raise FormatError(f"{len(data) - rd.pos} trailing bytes")
    if (access.level_min, access.level_max) != (l_min, l_max):
        raise FormatError("header levels disagree with the leaf structure")
    if access.level_max >= 0 and (sz, sx, sy) != (int(access.z_dim[-1]), int(access.x_dim[-1]),
                                                  int(access.y_dim[-1])):
        raise FormatError("header dims disagree with the leaf structure")
    for acc, partition in ((access, True), (tree_access, False)):
        report = validate(acc, partition=partition)
        if not report:
            raise ValidationFailed(report)
    apr = APR(access, tree_access, (sz, sx, sy), BuildInfo(E=E))
    return apr, values, tree_values


def write_volume(path, volume, dtype="f32"):
    """Write a raw volume: text header, blank line, little-endian payload."""
    if dtype not in RAW_TYPES:
        raise ValueError(f"element type must be one of {sorted(RAW_TYPES)}")
    arr = np.asarray(volume)
    if arr.ndim != 3:
        raise ValueError(f"expected a 3D volume, got shape {arr.shape}")
    header = (f"{RAW_MAGIC}\ndims {arr.shape[0]} {arr.shape[1]} {arr.shape[2]}\n"
              f"dtype {dtype}\nbyteorder little\n\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(arr).astype(RAW_TYPES[dtype]).tobytes())


def read_volume(path, raw=False):
    """Read a raw volume.  Integer payloads are converted to float32 unless ``raw``."""
    with open(path, "rb") as fh:
        data = fh.read()
    sep = data.find(b"\n\n")
    if sep < 0:
        raise FormatError("missing blank line after header")
    try:
        lines = data[:sep].decode("ascii").split("\n")
    except UnicodeDecodeError as exc:
        raise FormatError("header is not ASCII") from exc
    if lines[0] != RAW_MAGIC:
        raise MagicError(f"bad header line {lines[0]!r}")
    fields = {}
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        fields[key] = rest.split()
    try:
        dims = tuple(int(d) for d in fields["dims"])
        dtype = RAW_TYPES[fields["dtype"][0]]
        order = fields["byteorder"][0]
    except (KeyError, IndexError, ValueError) as exc:
        raise FormatError(f"incomplete or malformed header: {exc}") from exc
    if len(dims) != 3 or min(dims) < 1:
        raise FormatError(f"bad dims {dims}")
    if order != "little":
        raise FormatError(f"unsupported byte order {order!r}")
    payload = data[sep + 2:]
    expect = int(np.prod(dims)) * dtype.itemsize
    if len(payload) != expect:
        raise SizeMismatchError(f"payload has {len(payload)} bytes, dims need {expect}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
    if raw:
        return arr.copy()
    return arr.astype(np.float32)


def file_size(path) -> int:
    return os.stat(path).st_size
