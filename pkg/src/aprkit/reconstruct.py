"""Piecewise-constant reconstruction: full pixel volumes, level images, patches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import APR, _level_coordinates
from .tree import fill_tree
from .validation import check_values

PAD_MODES = ("reflect", "zero")


@dataclass(frozen=True)
class PatchSpec:
    """A z/x window at one level, spanning the whole y extent, plus padding."""

    level: int
    z_range: tuple
    x_range: tuple
    pad: int = 0
    pad_mode: str = "reflect"

    def __post_init__(self):
        if self.pad < 0:
            raise ValueError("pad must be >= 0")
        if self.pad_mode not in PAD_MODES:
            raise ValueError(f"pad_mode must be one of {PAD_MODES}")
        for r in (self.z_range, self.x_range):
            if len(r) != 2 or r[0] > r[1]:
                raise ValueError(f"bad index range {r}")


def _upsample(grid, factor, shape):
    for axis in range(3):
        grid = np.repeat(grid, factor, axis=axis)
    return grid[: shape[0], : shape[1], : shape[2]]


def reconstruct_full(apr: APR, values) -> np.ndarray:
    """Pixel volume where every pixel takes the value of its covering leaf."""
    return reconstruct_level(apr, values, None, apr.l_max)


def reconstruct_level(apr: APR, values, tree_values=None, level=None) -> np.ndarray:
    """Level-``level`` image: leaf value where a leaf at level <= l covers the
    cell, otherwise the interior node value at that level."""
    access = apr.access
    level = apr.l_max if level is None else int(level)
    if not (apr.l_min <= level <= apr.l_max):
        raise ValueError(f"level {level} outside [{apr.l_min}, {apr.l_max}]")
    values = check_values(values, access.n_particles)
    shape = access.level_dims(level)
    out = np.zeros(shape, dtype=np.result_type(values.dtype, np.float32))
    for lv in range(access.level_min, level + 1):
        sl, z, x, y = _level_coordinates(access, lv)
        if sl.stop == sl.start:
            continue
        grid_shape = access.level_dims(lv)
        grid = np.zeros(grid_shape, dtype=out.dtype)
        mask = np.zeros(grid_shape, dtype=bool)
        grid[z, x, y] = values[sl]
        mask[z, x, y] = True
        factor = 1 << (level - lv)
        if factor > 1:
            grid = _upsample(grid, factor, shape)
            mask = _upsample(mask, factor, shape)
        out[mask] = grid[mask]
    if level < apr.l_max:
        if tree_values is None:
            tree_values = fill_tree(apr, values)
        tree = apr.tree_access
        sl, z, x, y = _level_coordinates(tree, level)
        out[z, x, y] = np.asarray(tree_values)[sl]
    return out


def _kernel_args(apr: APR, values, tree_values, level):
    access, tree = apr.access, apr.tree_access
    t_ok = tree.n_particles > 0 and level <= tree.level_max
    if t_ok and tree_values is None:
        tree_values = fill_tree(apr, values)
    if not t_ok:
        # kernels index these arrays only when t_ok is set
        dummy = np.zeros(1, dtype=np.int64)
        t_arrays = (dummy, dummy, dummy, dummy, dummy, np.zeros(1))
    else:
        t_arrays = (tree.y64, tree.row_begin, tree.end64, tree.offset64, tree.x_dim,
                    np.asarray(tree_values, dtype=np.float64))
    leaf = (access.level_min, access.y64, access.row_begin, access.end64, access.offset64,
            access.x_dim, np.asarray(values, dtype=np.float64))
    return leaf + (t_ok,) + t_arrays


def reconstruct_patch(apr: APR, values, tree_values, spec: PatchSpec) -> np.ndarray:
    """Dense buffer for ``spec``: a window of the level image plus padding.

    Only the sparse rows that intersect the window are read.
    """
    values = check_values(values, apr.access.n_particles)
    level = spec.level
    if not (apr.l_min <= level <= apr.l_max):
        raise ValueError(f"level {level} outside [{apr.l_min}, {apr.l_max}]")
    nz, nx, ny = apr.access.level_dims(level)
    (z0, z1), (x0, x1) = spec.z_range, spec.x_range
    if z0 < 0 or x0 < 0 or z1 > nz or x1 > nx:
        raise ValueError(f"patch ranges {spec.z_range}, {spec.x_range} outside {nz}x{nx}")
    p = spec.pad
    shape = (z1 - z0 + 2 * p, x1 - x0 + 2 * p, ny + 2 * p)
    buf = np.zeros(shape, dtype=np.float64)
    if buf.size:
        _kernels.fill_patch(buf, level, z0 - p, x0 - p, shape[0], shape[1], nz, nx, ny,
                            -p, ny + p, spec.pad_mode == "zero",
                            *_kernel_args(apr, values, tree_values, level))
    return buf
