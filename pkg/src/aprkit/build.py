"""Pixel volume -> APR conversion.

Pipeline: gradient magnitude and local error scale give a per-pixel target
level; the level solver turns targets into a balanced partition of cells; leaf
values are block means of the source pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import ndimage

from .core import APR, BuildInfo, LinearAccess, level_geometry
from .tree import init_tree_structure
from .validation import check_positive, check_volume


@dataclass(frozen=True)
class ConstantSigma:
    """Spatially constant error scale; ``None`` means the global intensity range."""

    value: Optional[float] = None

    def __str__(self):
        return f"constant({'range' if self.value is None else self.value})"


@dataclass(frozen=True)
class LocalRangeSigma:
    """Local intensity range over a ``(2r+1)^3`` window, box-smoothed once.

    ``floor`` defaults to ``1e-3`` times the global intensity range.
    """

    window_radius: int = 2
    floor: Optional[float] = None

    def __post_init__(self):
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if self.floor is not None and not self.floor > 0:
            raise ValueError("floor must be positive")

    def __str__(self):
        return f"local_range({self.window_radius})"


SigmaPolicy = Union[ConstantSigma, LocalRangeSigma]


@dataclass(frozen=True)
class BuildParams:
    """Parameters of the conversion.

    ``safety_levels`` is added to the target level of every pixel with a
    non-zero gradient; ``None`` means 1 for a constant error scale and 0
    otherwise.  With ``guard`` enabled, cells whose
    block mean would violate the error bound at any of their pixels are
    refined further, so the bound holds exactly against the input pixels.
    """

    E: float = 0.1
    sigma_policy: SigmaPolicy = field(default_factory=ConstantSigma)
    gradient_policy: str = "central_diff"
    smoothing_passes: int = 0
    safety_levels: Optional[int] = None
    guard: bool = True

    def __post_init__(self):
        check_positive("E", self.E)
        if self.gradient_policy not in ("central_diff", "sobel"):
            raise ValueError(f"unknown gradient policy {self.gradient_policy!r}")
        if self.smoothing_passes < 0:
            raise ValueError("smoothing_passes must be >= 0")


def gradient_magnitude(volume, policy="central_diff") -> np.ndarray:
    """Per-pixel ``|grad f|`` with replicate boundaries.

    ``central_diff`` uses ``(f[i+1] - f[i-1]) / 2``; ``sobel`` uses the 3D
    Sobel operator scaled so that a unit ramp has magnitude 1.
    """
    v = check_volume(volume).astype(np.float64)
    sq = np.zeros_like(v)
    if policy == "central_diff":
        p = np.pad(v, 1, mode="edge")
        core = (slice(1, -1),) * 3
        for axis in range(3):
            hi = list(core)
            lo = list(core)
            hi[axis] = slice(2, None)
            lo[axis] = slice(0, -2)
            sq += ((p[tuple(hi)] - p[tuple(lo)]) * 0.5) ** 2
    elif policy == "sobel":
        for axis in range(3):
            sq += (ndimage.sobel(v, axis=axis, mode="nearest") / 32.0) ** 2
    else:
        raise ValueError(f"unknown gradient policy {policy!r}")
    return np.sqrt(sq)


def _intensity_range(v):
    return float(v.max()) - float(v.min())


def local_scale(volume, policy: SigmaPolicy) -> np.ndarray:
    """Local error scale ``sigma(x)``, never below the policy floor."""
    v = check_volume(volume).astype(np.float64)
    if isinstance(policy, ConstantSigma):
        value = policy.value
        if value is None:
            value = _intensity_range(v) or 1.0
        check_positive("sigma", value)
        return np.full(v.shape, float(value))
    if isinstance(policy, LocalRangeSigma):
        size = 2 * policy.window_radius + 1
        rng = (ndimage.maximum_filter(v, size=size, mode="nearest")
               - ndimage.minimum_filter(v, size=size, mode="nearest"))
        rng = ndimage.uniform_filter(rng, size=size, mode="nearest")
        floor = policy.floor
        if floor is None:
            floor = 1e-3 * _intensity_range(v) or 1.0
        return np.maximum(rng, floor)
    raise TypeError(f"unknown sigma policy {policy!r}")


def level_function(grad, sigma, E, l_min, l_max) -> np.ndarray:
    """Target level per pixel: the coarsest level whose cell fits inside ``E*sigma/|grad|``.

    ``l = clamp(ceil(log2(2**l_max / L)), l_min, l_max)`` with
    ``L = E*sigma/|grad|``; pixels with zero gradient get ``l_min``.
    """
    grad = np.asarray(grad, dtype=np.float64)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), grad.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = l_max + np.log2(grad / (E * sigma))
    levels = np.where(grad > 0, np.ceil(raw), l_min)
    return np.clip(levels, l_min, l_max).astype(np.int8)


def _block_reduce(a, shape, how, factor=2):
    pad = [(0, factor * s - n) for s, n in zip(shape, a.shape)]
    a = np.pad(a, pad) if how == "sum" else np.pad(a, pad, mode="edge")
    blocks = a.reshape(shape[0], factor, shape[1], factor, shape[2], factor)
    return blocks.sum(axis=(1, 3, 5)) if how == "sum" else blocks.max(axis=(1, 3, 5))


def _upsample(grid, factor, shape):
    for axis in range(3):
        grid = np.repeat(grid, factor, axis=axis)
    return grid[: shape[0], : shape[1], : shape[2]]


def mean_pyramid(volume, dims) -> list:
    """Block means of ``volume`` at every level (clipped footprints at the border)."""
    l_max = len(dims) - 1
    sums = [None] * (l_max + 1)
    counts = [None] * (l_max + 1)
    sums[l_max] = np.asarray(volume, dtype=np.float64)
    counts[l_max] = np.ones(sums[l_max].shape)
    for level in range(l_max - 1, -1, -1):
        shape = tuple(int(d) for d in dims[level])
        sums[level] = _block_reduce(sums[level + 1], shape, "sum")
        counts[level] = _block_reduce(counts[level + 1], shape, "sum")
    return [s / c for s, c in zip(sums, counts)]


def guard_levels(volume, sigma, E, l_min, l_max, dims, means=None) -> np.ndarray:
    """Lowest level per pixel from which every enclosing cell meets the bound.

    A cell is acceptable when its (float32-rounded) block mean is within
    ``E*sigma`` of every pixel it covers.
    """
    v = np.asarray(volume, dtype=np.float64)
    sigma = np.broadcast_to(sigma, v.shape)
    if means is None:
        means = mean_pyramid(v, dims)
    need = np.full(v.shape, l_min, dtype=np.int8)
    limit = E * (1.0 - 1e-9)
    for level in range(l_min, l_max):
        shape = tuple(int(d) for d in dims[level])
        factor = 1 << (l_max - level)
        approx = _upsample(means[level].astype(np.float32), factor, v.shape).astype(np.float64)
        bad_px = np.abs(v - approx) / sigma > limit
        bad = _block_reduce(bad_px, shape, "max", factor)
        need = np.maximum(need, np.where(_upsample(bad, factor, v.shape), level + 1, l_min))
    return need.astype(np.int8)


def solve_levels(target, l_min=None, l_max=None) -> LinearAccess:
    """Coarsest balanced partition whose cells are at least as fine as the targets.

    A cell must be subdivided when a pixel inside it targets a finer level or
    when any cell in its 3x3x3 neighbourhood one level finer is subdivided;
    the latter keeps levels of touching cells within one of each other.
    """
    target = np.asarray(target)
    g_min, g_max, dims = level_geometry(target.shape)
    l_min = g_min if l_min is None else l_min
    l_max = g_max if l_max is None else l_max
    if (l_min, l_max) != (g_min, g_max):
        raise ValueError(f"level range ({l_min}, {l_max}) inconsistent with shape {target.shape}")
    target = np.clip(target.astype(np.int8), l_min, l_max)
    demand = [None] * (l_max + 1)
    demand[l_max] = target
    for level in range(l_max - 1, l_min - 1, -1):
        demand[level] = _block_reduce(demand[level + 1], tuple(dims[level]), "max")
    split = [None] * (l_max + 1)
    split[l_max] = np.zeros(tuple(dims[l_max]), dtype=bool)
    cube = np.ones((3, 3, 3), dtype=bool)
    for level in range(l_max - 1, l_min - 1, -1):
        shape = tuple(int(d) for d in dims[level])
        finer = split[level + 1]
        if finer.any():
            finer = ndimage.binary_dilation(finer, structure=cube)
        split[level] = (demand[level] > level) | _block_reduce(finer, shape, "max")
    grids = [None] * (l_max + 1)
    for level in range(l_min, l_max + 1):
        shape = tuple(int(d) for d in dims[level])
        if level == l_min:
            exists = np.ones(shape, dtype=bool)
        else:
            exists = _upsample(split[level - 1], 2, shape)
        grids[level] = exists & ~split[level]
    return LinearAccess.from_grids(l_min, dims, grids)


def sample_particles(volume, access: LinearAccess, means=None) -> np.ndarray:
    """Leaf values: mean of the source pixels in each (clipped) cell footprint."""
    v = check_volume(volume)
    dims = np.stack([access.z_dim, access.x_dim, access.y_dim], axis=1)
    if tuple(dims[-1]) != v.shape:
        raise ValueError(f"structure dims {tuple(dims[-1])} do not match volume {v.shape}")
    if means is None:
        means = mean_pyramid(v, dims)
    out = np.empty(access.n_particles, dtype=np.float32)
    level, z, x, y = access.coordinates()
    for lv in access.levels:
        sl = access.level_slice(lv)
        out[sl] = means[lv][z[sl], x[sl], y[sl]]
    return out


def build_apr(volume, params: BuildParams | None = None):
    """Convert a pixel volume into ``(APR, leaf values)``."""
    params = params or BuildParams()
    v = check_volume(volume)
    l_min, l_max, dims = level_geometry(v.shape)
    grad = gradient_magnitude(v, params.gradient_policy)
    for _ in range(params.smoothing_passes):
        # box smoothing can leave round-off negatives
        grad = np.maximum(ndimage.uniform_filter(grad, size=3, mode="nearest"), 0.0)
    sigma = local_scale(v, params.sigma_policy)
    target = level_function(grad, sigma, params.E, l_min, l_max)
    safety = params.safety_levels
    if safety is None:
        safety = 1 if isinstance(params.sigma_policy, ConstantSigma) else 0
    # flat pixels keep l_min: there is no variation for the safety margin to protect
    target = np.where(grad > 0, np.minimum(target.astype(np.int16) + safety, l_max),
                      target).astype(np.int8)
    means = mean_pyramid(v, dims)
    if params.guard:
        target = np.maximum(target, guard_levels(v, sigma, params.E, l_min, l_max, dims, means))
    access = solve_levels(target, l_min, l_max)
    info = BuildInfo(E=float(params.E), sigma_policy=str(params.sigma_policy),
                     gradient_policy=params.gradient_policy)
    apr = APR(access, init_tree_structure(access), tuple(int(d) for d in v.shape), info)
    return apr, sample_particles(v, access, means)


def apr_from_access(access: LinearAccess, info: BuildInfo | None = None) -> APR:
    """Wrap a leaf structure (e.g. hand-made or decoded) into an APR with its tree."""
    dims = (int(access.z_dim[-1]), int(access.x_dim[-1]), int(access.y_dim[-1]))
    return APR(access, init_tree_structure(access), dims, info or BuildInfo())
