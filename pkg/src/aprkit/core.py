"""Sparse level/row/column storage of particle cells and iteration over it.

Particles are ordered level -> z -> x -> y.  Each resolution level is stored
as a compressed sparse row structure over the (z, x) plane with explicit
y-indices, and the per-level row offsets are concatenated into one vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import IntegrityError, RangeError

Y_DTYPE = np.uint16
OFFSET_DTYPE = np.uint64


def level_geometry(source_dims):
    """Return ``(l_min, l_max, dims)`` for a source volume shape.

    ``dims[l]`` holds the ``(z, x, y)`` grid size at level ``l``; cells past the
    image border are clipped, so ``dims[l] = ceil(dim / 2**(l_max - l))``.
    """
    source_dims = tuple(int(d) for d in source_dims)
    if len(source_dims) != 3 or min(source_dims) < 1:
        raise ValueError(f"expected three positive dimensions, got {source_dims}")
    l_max = max(0, math.ceil(math.log2(max(source_dims))))
    # a power of two can be mis-rounded by log2 for huge values
    while (1 << l_max) < max(source_dims):
        l_max += 1
    l_min = min(1, l_max)
    dims = np.empty((l_max + 1, 3), dtype=np.int64)
    for level in range(l_max + 1):
        shift = l_max - level
        dims[level] = [-(-d // (1 << shift)) for d in source_dims]
    return l_min, l_max, dims


@dataclass(frozen=True, eq=False)
class LinearAccess:
    """CSR-style coordinates of particle cells over a range of levels.

    Attributes
    ----------
    level_min, level_max : int
        Inclusive level range stored.  ``level_max < level_min`` denotes an
        empty structure.
    z_dim, x_dim, y_dim : ndarray of int64
        Grid size per level, indexed directly by level (length ``level_max + 1``).
    y_idx : ndarray of uint16
        y-index of every particle, in storage order.
    xz_end : ndarray of uint64
        Cumulative end offset into ``y_idx`` for every (level, z, x) row.
    level_offset : ndarray of uint64
        First row of each level inside ``xz_end``; indexed by level, length
        ``level_max + 2`` (entries below ``level_min`` are zero).
    """

    level_min: int
    level_max: int
    z_dim: np.ndarray
    x_dim: np.ndarray
    y_dim: np.ndarray
    y_idx: np.ndarray
    xz_end: np.ndarray
    level_offset: np.ndarray

    @classmethod
    def from_grids(cls, level_min, dims, grids):
        """Build from per-level boolean occupancy grids.

        ``grids[l]`` is a boolean array of shape ``dims[l]`` (or ``None`` for a
        level outside the stored range).
        """
        level_max = len(dims) - 1
        y_parts, count_parts = [], []
        level_offset = np.zeros(level_max + 2, dtype=OFFSET_DTYPE)
        rows = 0
        for level in range(level_min, level_max + 1):
            grid = grids[level]
            nz, nx, ny = (int(v) for v in dims[level])
            if grid is None:
                grid = np.zeros((nz, nx, ny), dtype=bool)
            if grid.shape != (nz, nx, ny):
                raise ValueError(f"level {level}: grid shape {grid.shape} != {(nz, nx, ny)}")
            level_offset[level] = rows
            _, _, y = np.nonzero(grid)
            y_parts.append(y)
            count_parts.append(grid.sum(axis=2, dtype=np.int64).ravel())
            rows += nz * nx
        level_offset[level_max + 1] = rows
        return cls._assemble(level_min, dims, y_parts, count_parts, level_offset)

    @classmethod
    def from_coordinates(cls, level_min, dims, level, z, x, y):
        """Build from particle coordinates given in any order (duplicates rejected)."""
        level_max = len(dims) - 1
        level = np.asarray(level, dtype=np.int64)
        z, x, y = (np.asarray(a, dtype=np.int64) for a in (z, x, y))
        dims = np.asarray(dims, dtype=np.int64)
        level_offset = np.zeros(level_max + 2, dtype=OFFSET_DTYPE)
        rows = 0
        for lv in range(level_min, level_max + 1):
            level_offset[lv] = rows
            rows += int(dims[lv, 0] * dims[lv, 1])
        level_offset[level_max + 1] = rows
        if level.size:
            if level.min() < level_min or level.max() > level_max:
                raise RangeError("particle level outside the declared range")
            d = dims[level]
            if (z < 0).any() or (x < 0).any() or (y < 0).any() or (z >= d[:, 0]).any() \
                    or (x >= d[:, 1]).any() or (y >= d[:, 2]).any():
                raise RangeError("particle index outside its level grid")
        row = level_offset[level].astype(np.int64) + z * dims[level, 1] + x
        order = np.lexsort((y, row))
        row, y = row[order], y[order]
        if y.size > 1 and np.any((row[1:] == row[:-1]) & (y[1:] == y[:-1])):
            raise IntegrityError("duplicate particle cell")
        counts = np.bincount(row, minlength=rows) if rows else np.zeros(0, np.int64)
        return cls._assemble(level_min, dims, [y], [counts], level_offset)

    @classmethod
    def empty(cls):
        z = np.zeros(0, dtype=np.int64)
        return cls(0, -1, z, z, z, np.zeros(0, Y_DTYPE), np.zeros(0, OFFSET_DTYPE),
                   np.zeros(1, OFFSET_DTYPE))

    @classmethod
    def _assemble(cls, level_min, dims, y_parts, count_parts, level_offset):
        dims = np.asarray(dims, dtype=np.int64)
        if dims.size and dims[:, 2].max() > np.iinfo(Y_DTYPE).max + 1:
            raise ValueError("y dimension exceeds the 16-bit y-index range")
        y_idx = (np.concatenate(y_parts) if y_parts else np.zeros(0)).astype(Y_DTYPE)
        counts = np.concatenate(count_parts) if count_parts else np.zeros(0, np.int64)
        xz_end = np.cumsum(counts, dtype=np.int64).astype(OFFSET_DTYPE)
        return cls(
            level_min=int(level_min),
            level_max=len(dims) - 1,
            z_dim=dims[:, 0].copy(),
            x_dim=dims[:, 1].copy(),
            y_dim=dims[:, 2].copy(),
            y_idx=y_idx,
            xz_end=xz_end,
            level_offset=level_offset,
        )

    @property
    def n_particles(self) -> int:
        return int(self.y_idx.size)

    @property
    def n_rows(self) -> int:
        return int(self.xz_end.size)

    @property
    def levels(self) -> range:
        return range(self.level_min, self.level_max + 1)

    def level_dims(self, level):
        return int(self.z_dim[level]), int(self.x_dim[level]), int(self.y_dim[level])

    # int64 views for the compiled kernels, which must not mix signed and
    # unsigned integer arithmetic
    @cached_property
    def y64(self) -> np.ndarray:
        return self.y_idx.astype(np.int64)

    @cached_property
    def end64(self) -> np.ndarray:
        return self.xz_end.astype(np.int64)

    @cached_property
    def offset64(self) -> np.ndarray:
        return self.level_offset.astype(np.int64)

    @cached_property
    def row_begin(self) -> np.ndarray:
        begin = np.zeros(self.n_rows, dtype=np.int64)
        begin[1:] = self.end64[:-1]
        return begin

    def level_slice(self, level) -> slice:
        """Range of particle indices belonging to ``level``."""
        r0, r1 = int(self.level_offset[level]), int(self.level_offset[level + 1])
        begin = int(self.xz_end[r0 - 1]) if r0 > 0 else 0
        end = int(self.xz_end[r1 - 1]) if r1 > 0 else 0
        return slice(begin, end)

    def coordinates(self):
        """Return ``(level, z, x, y)`` int64 arrays for every particle in storage order."""
        counts = np.diff(self.end64, prepend=0)
        rows = np.repeat(np.arange(self.n_rows, dtype=np.int64), counts)
        level = np.searchsorted(self.offset64, rows, side="right") - 1
        local = rows - self.offset64[level]
        xd = self.x_dim[level] if level.size else np.zeros(0, np.int64)
        return level, local // np.maximum(xd, 1), local % np.maximum(xd, 1), self.y64.copy()

    @cached_property
    def particle_levels(self) -> np.ndarray:
        out = np.empty(self.n_particles, dtype=np.int64)
        for level in self.levels:
            out[self.level_slice(level)] = level
        return out


@dataclass(frozen=True)
class BuildInfo:
    """Parameters recorded at build time."""

    E: float = float("nan")
    sigma_policy: str = ""
    gradient_policy: str = ""


@dataclass(frozen=True, eq=False)
class APR:
    """An adaptive particle representation: leaf cells plus interior tree nodes."""

    access: LinearAccess
    tree_access: LinearAccess
    source_dims: tuple
    params: BuildInfo = field(default_factory=BuildInfo)

    @property
    def l_min(self) -> int:
        return self.access.level_min

    @property
    def l_max(self) -> int:
        return self.access.level_max

    @property
    def n_particles(self) -> int:
        return self.access.n_particles

    @property
    def n_tree(self) -> int:
        return self.tree_access.n_particles

    @property
    def n_pixels(self) -> int:
        return int(np.prod(self.source_dims, dtype=np.int64))

    def __repr__(self):
        return (f"APR(dims={self.source_dims}, levels=[{self.l_min}, {self.l_max}], "
                f"particles={self.n_particles}, tree={self.n_tree})")


class ValidationReport(NamedTuple):
    ok: bool
    message: str = "ok"

    def __bool__(self):
        return self.ok


def get_row(access: LinearAccess, level, z, x):
    """Return ``(row_begin, row_end)`` particle indices of sparse row (level, z, x)."""
    if not (access.level_min <= level <= access.level_max):
        raise RangeError(f"level {level} outside [{access.level_min}, {access.level_max}]")
    if not (0 <= z < access.z_dim[level] and 0 <= x < access.x_dim[level]):
        raise RangeError(f"row ({z}, {x}) outside level {level} grid "
                         f"{access.z_dim[level]}x{access.x_dim[level]}")
    row = int(access.level_offset[level]) + int(z) * int(access.x_dim[level]) + int(x)
    begin = int(access.xz_end[row - 1]) if row > 0 else 0
    return begin, int(access.xz_end[row])


def for_each_particle(access: LinearAccess, visitor: Callable[[int, int, int, int, int], None]):
    """Call ``visitor(level, z, x, y, index)`` for every particle in storage order."""
    y_idx = access.y_idx
    for level in access.levels:
        nz, nx, _ = access.level_dims(level)
        for z in range(nz):
            for x in range(nx):
                begin, end = get_row(access, level, z, x)
                for i in range(begin, end):
                    visitor(level, z, x, int(y_idx[i]), i)


def particle_position(level, index, l_max):
    """Cell-center position in pixel units: cell origin plus half a cell, minus half a pixel."""
    size = 2.0 ** (l_max - level)
    return (np.asarray(index, dtype=np.float64) + 0.5) * size - 0.5


def _find_in_row(access, level, z, x, y):
    begin, end = get_row(access, level, z, x)
    row = access.y_idx[begin:end]
    k = int(np.searchsorted(row, y))
    return begin + k if k < row.size and row[k] == y else -1


def resolution_level_at(access: LinearAccess, z, x, y):
    """Level of the unique leaf cell containing pixel ``(z, x, y)``."""
    l_max = access.level_max
    nz, nx, ny = access.level_dims(l_max)
    if not (0 <= z < nz and 0 <= x < nx and 0 <= y < ny):
        raise RangeError(f"pixel ({z}, {x}, {y}) outside {nz}x{nx}x{ny}")
    found = []
    for level in access.levels:
        d = l_max - level
        if _find_in_row(access, level, z >> d, x >> d, y >> d) >= 0:
            found.append(level)
    if len(found) != 1:
        raise IntegrityError(f"pixel ({z}, {x}, {y}) covered by {len(found)} cells")
    return found[0]


def _upsample(grid, factor, shape):
    for axis in range(3):
        grid = np.repeat(grid, factor, axis=axis)
    return grid[: shape[0], : shape[1], : shape[2]]


def _occupancy(access, level):
    grid = np.zeros(access.level_dims(level), dtype=bool)
    _, z, x, y = _level_coordinates(access, level)
    grid[z, x, y] = True
    return grid


def _level_coordinates(access, level):
    sl = access.level_slice(level)
    nz, nx, _ = access.level_dims(level)
    r0 = int(access.level_offset[level])
    counts = np.diff(access.end64[r0: r0 + nz * nx], prepend=sl.start)
    local = np.repeat(np.arange(nz * nx, dtype=np.int64), counts)
    return sl, local // max(nx, 1), local % max(nx, 1), access.y64[sl]


def level_map(access: LinearAccess) -> np.ndarray:
    """Per-pixel level of the covering leaf cell (-1 where uncovered)."""
    shape = access.level_dims(access.level_max)
    out = np.full(shape, -1, dtype=np.int8)
    for level in access.levels:
        mask = _upsample(_occupancy(access, level), 1 << (access.level_max - level), shape)
        out[mask] = level
    return out


def validate(access: LinearAccess, partition: bool = True) -> ValidationReport:
    """Check structural invariants; with ``partition`` also require an exact cover.

    Violations are reported, never raised.
    """
    n_levels = access.level_max + 1
    for name in ("z_dim", "x_dim", "y_dim"):
        if getattr(access, name).shape != (max(n_levels, 0),):
            return ValidationReport(False, f"{name} has wrong length")
    if access.level_offset.shape != (max(n_levels, 0) + 1,):
        return ValidationReport(False, "level_offset has wrong length")
    if access.level_max < access.level_min:
        ok = access.n_particles == 0 and access.n_rows == 0
        return ValidationReport(ok, "ok" if ok else "empty structure holds data")
    for level in access.levels:
        expect = int(access.z_dim[level] * access.x_dim[level])
        if int(access.level_offset[level + 1]) - int(access.level_offset[level]) != expect:
            return ValidationReport(False, f"level_offset mismatch at level {level}")
    if int(access.level_offset[access.level_min]) != 0:
        return ValidationReport(False, "level_offset does not start at zero")
    if int(access.level_offset[-1]) != access.n_rows:
        return ValidationReport(False, "xz_end length does not match level offsets")
    end = access.end64
    if end.size and (np.any(np.diff(end) < 0) or end[0] < 0):
        return ValidationReport(False, "xz_end is decreasing")
    if (int(end[-1]) if end.size else 0) != access.n_particles:
        return ValidationReport(False, "xz_end[last] != len(y_idx)")
    y = access.y64
    if y.size > 1:
        step = np.diff(y)
        same_row = np.ones(y.size - 1, dtype=bool)
        boundaries = end[(end > 0) & (end < y.size)] - 1
        same_row[boundaries] = False
        if np.any(same_row & (step <= 0)):
            return ValidationReport(False, "non-increasing y within a row")
    if y.size and np.any(y >= access.y_dim[access.particle_levels]):
        return ValidationReport(False, "y index outside level grid")
    if partition:
        shape = access.level_dims(access.level_max)
        cover = np.zeros(shape, dtype=np.int16)
        for level in access.levels:
            cover += _upsample(_occupancy(access, level), 1 << (access.level_max - level), shape)
        if np.any(cover > 1):
            return ValidationReport(False, f"double coverage at {np.argwhere(cover > 1)[0].tolist()}")
        if np.any(cover == 0):
            return ValidationReport(False, f"pixel uncovered at {np.argwhere(cover == 0)[0].tolist()}")
    return ValidationReport(True)


def max_neighbor_level_jump(access: LinearAccess, connectivity: int = 26) -> int:
    """Largest level difference between adjacent leaf cells (26- or 6-connectivity)."""
    lm = level_map(access).astype(np.int16)
    worst = 0
    offsets = [(dz, dx, dy) for dz in (-1, 0, 1) for dx in (-1, 0, 1) for dy in (-1, 0, 1)
               if (dz, dx, dy) > (0, 0, 0)]
    if connectivity == 6:
        offsets = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    head = {1: slice(0, -1), -1: slice(1, None), 0: slice(None)}
    tail = {1: slice(1, None), -1: slice(0, -1), 0: slice(None)}
    for off in offsets:
        a = lm[tuple(head[o] for o in off)]
        b = lm[tuple(tail[o] for o in off)]
        if a.size:
            worst = max(worst, int(np.abs(a - b).max()))
    return worst


def computational_ratio(apr: APR) -> float:
    """Pixel count divided by leaf particle count."""
    return apr.n_pixels / apr.n_particles
