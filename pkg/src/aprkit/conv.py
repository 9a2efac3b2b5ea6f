"""Discrete convolution on APRs and on dense pixel volumes.

Every particle is filtered on an isotropic patch reconstructed at its own
level, with a per-level stencil taken from a ``StencilPyramid``.  Stencils use
true-convolution orientation: ``o[i] = sum_a w[a] * u[i + r - a]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np
from scipy import ndimage, signal

from . import _kernels
from ._parallel import run_dynamic
from .core import APR
from .exceptions import CapabilityError
from .reconstruct import PAD_MODES, _kernel_args
from .tree import fill_tree
from .validation import check_values, check_volume

MAX_EXTENT = 13


@dataclass(frozen=True, eq=False)
class Stencil:
    """Dense filter weights with odd extent along each of the three axes."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim > 3:
            raise ValueError(f"stencil must have at most 3 dimensions, got {w.ndim}")
        while w.ndim < 3:
            w = w[np.newaxis]
        if any(k % 2 == 0 for k in w.shape):
            raise ValueError(f"stencil extents must be odd, got {w.shape}")
        if not np.isfinite(w).all():
            raise ValueError("stencil weights must be finite")
        object.__setattr__(self, "weights", np.ascontiguousarray(w))

    @property
    def shape(self):
        return self.weights.shape

    def __eq__(self, other):
        return isinstance(other, Stencil) and self.shape == other.shape and \
            np.array_equal(self.weights, other.weights)

    def __repr__(self):
        return f"Stencil(shape={self.shape}, sum={self.weights.sum():.6g})"


def _as_stencil(w) -> Stencil:
    return w if isinstance(w, Stencil) else Stencil(w)


def flip_stencil(w) -> Stencil:
    """Reverse the element order along every axis."""
    return Stencil(_as_stencil(w).weights[::-1, ::-1, ::-1].copy())


def rescale_stencil(w, delta) -> Stencil:
    """Scale weights by ``2**-delta`` (finite differences on a coarser grid)."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    return Stencil(_as_stencil(w).weights * 2.0 ** (-delta))


def _restriction_counts(k, factor):
    # counts[j, a]: fine offsets t in [0, factor) for which fine tap j lands in coarse tap a
    r = k // 2
    rc = -(-r // factor)
    counts = np.zeros((k, 2 * rc + 1))
    for j in range(k):
        for t in range(factor):
            counts[j, rc - (t + r - j) // factor] += 1
    return counts


def restrict_weights(w, delta) -> np.ndarray:
    """Coarse-grid equivalent of ``w`` for any dimensionality.

    Applying the result on a grid ``2**delta`` times coarser equals prolonging
    piecewise-constantly, convolving with ``w`` and block-averaging back.  The
    coarse extent along an axis of radius ``r`` is ``2*ceil(r/2**delta) + 1``.
    """
    w = np.asarray(w, dtype=np.float64)
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if delta == 0:
        return w.copy()
    factor = 1 << delta
    out = w
    for k in w.shape:
        # contracting axis 0 appends the coarse axis at the end
        out = np.tensordot(out, _restriction_counts(k, factor), axes=([0], [0]))
    return out / float(factor) ** w.ndim


def restrict_stencil(w, delta) -> Stencil:
    """Restrict a 3D stencil ``delta`` levels coarser (see ``restrict_weights``)."""
    return Stencil(restrict_weights(_as_stencil(w).weights, delta))


class StencilPyramid:
    """One stencil per level from ``l_min`` to ``l_max``.

    Built with ``restricted`` (pixel-consistent), ``rescaled`` (weights scaled
    by ``2**-(l_max - l)``), ``uniform`` (same stencil everywhere) or
    ``explicit`` (caller supplies every level).
    """

    def __init__(self, stencils: Mapping[int, Stencil], mode: str = "explicit"):
        self.stencils = {int(k): _as_stencil(v) for k, v in stencils.items()}
        self.mode = mode

    @classmethod
    def restricted(cls, w, l_min, l_max):
        w = _as_stencil(w)
        return cls({l: restrict_stencil(w, l_max - l) for l in range(l_min, l_max + 1)},
                   "restricted")

    @classmethod
    def rescaled(cls, w, l_min, l_max):
        w = _as_stencil(w)
        return cls({l: rescale_stencil(w, l_max - l) for l in range(l_min, l_max + 1)},
                   "rescaled")

    @classmethod
    def uniform(cls, w, l_min, l_max):
        w = _as_stencil(w)
        return cls({l: w for l in range(l_min, l_max + 1)}, "uniform")

    @classmethod
    def for_apr(cls, w, apr: APR, mode="restricted"):
        builders = {"restricted": cls.restricted, "rescaled": cls.rescaled,
                    "uniform": cls.uniform}
        if mode not in builders:
            raise ValueError(f"unknown pyramid mode {mode!r}")
        return builders[mode](w, apr.l_min, apr.l_max)

    def __getitem__(self, level) -> Stencil:
        return self.stencils[level]

    def covers(self, l_min, l_max) -> bool:
        return all(l in self.stencils for l in range(l_min, l_max + 1))

    def flipped(self) -> "StencilPyramid":
        return StencilPyramid({l: flip_stencil(w) for l, w in self.stencils.items()}, self.mode)

    def __repr__(self):
        return f"StencilPyramid(mode={self.mode!r}, levels={sorted(self.stencils)})"


# --- stencil presets -----------------------------------------------------

def identity_stencil() -> Stencil:
    return Stencil(np.ones((1, 1, 1)))


def box_stencil(k) -> Stencil:
    return Stencil(np.full((k, k, k), 1.0 / k ** 3))


def gaussian_stencil(sigma, size=None) -> Stencil:
    """Normalized isotropic Gaussian; default extent ``2*ceil(3*sigma) + 1``."""
    if size is None:
        size = 2 * int(np.ceil(3 * sigma)) + 1
    r = size // 2
    g = np.exp(-0.5 * (np.arange(-r, r + 1) / sigma) ** 2)
    w = g[:, None, None] * g[None, :, None] * g[None, None, :]
    return Stencil(w / w.sum())


def _axis_stencil(profile, axis):
    shape = [1, 1, 1]
    shape[axis] = len(profile)
    return np.asarray(profile, dtype=np.float64).reshape(shape)


def central_difference_stencil(axis) -> Stencil:
    """``(u[i+1] - u[i-1]) / 2`` along ``axis`` (0=z, 1=x, 2=y)."""
    return Stencil(_axis_stencil([0.5, 0.0, -0.5], axis))


def sobel_stencil(axis) -> Stencil:
    """Central difference along ``axis`` smoothed by ``[1, 2, 1]/4`` across it."""
    w = np.ones((1, 1, 1))
    for a in range(3):
        profile = [0.5, 0.0, -0.5] if a == axis else [0.25, 0.5, 0.25]
        w = w * _axis_stencil(profile, a)
    return Stencil(w)


# --- row occupancy ---------------------------------------------------------

class RowIndex(NamedTuple):
    """Occupied rows of one level with the y range of their particles."""

    z: np.ndarray
    x: np.ndarray
    y_min: np.ndarray
    y_max: np.ndarray

    def __len__(self):
        return int(self.z.size)


def nonempty_row_index(apr: APR) -> dict:
    """Per level, the (z, x) rows holding at least one particle and their y range."""
    access = apr.access
    out = {}
    for level in access.levels:
        nz, nx, _ = access.level_dims(level)
        r0 = int(access.level_offset[level])
        rows = np.arange(r0, r0 + nz * nx)
        begin, end = access.row_begin[rows], access.end64[rows]
        occupied = np.nonzero(end > begin)[0]
        out[level] = RowIndex(
            z=occupied // max(nx, 1),
            x=occupied % max(nx, 1),
            y_min=access.y64[begin[occupied]],
            y_max=access.y64[end[occupied] - 1],
        )
    return out


# --- convolution -------------------------------------------------------------

def _work_units(apr, row_index, skip_empty_rows):
    units = []
    for level in apr.access.levels:
        nz, nx, ny = apr.access.level_dims(level)
        if not skip_empty_rows:
            all_x = np.arange(nx, dtype=np.int64)
            units.extend((level, z, all_x, 0, ny) for z in range(nz))
            continue
        ri = row_index[level]
        if not len(ri):
            continue
        zs, starts = np.unique(ri.z, return_index=True)
        bounds = list(starts[1:]) + [len(ri)]
        for z, a, b in zip(zs, starts, bounds):
            units.append((level, int(z), ri.x[a:b].astype(np.int64),
                          int(ri.y_min[a:b].min()), int(ri.y_max[a:b].max()) + 1))
    return units


def convolve_apr(apr: APR, values, pyramid: StencilPyramid, tree_values=None,
                 pad_mode="reflect", threads=None, skip_empty_rows=True,
                 max_extent=MAX_EXTENT, row_index=None) -> np.ndarray:
    """Filter every particle with its level's stencil on a reconstructed patch.

    The output at particle (l, i) equals the level-l stencil applied at i to
    the level-l reconstruction of the input with ``pad_mode`` boundaries.
    Work is distributed per (level, z-slice) with dynamic scheduling; the
    result is bit-identical for any thread count and with or without
    ``skip_empty_rows``.

    Raises
    ------
    CapabilityError
        If a stencil exceeds ``max_extent`` along any axis.
    """
    if pad_mode not in PAD_MODES:
        raise ValueError(f"pad_mode must be one of {PAD_MODES}")
    values = check_values(values, apr.n_particles)
    if not pyramid.covers(apr.l_min, apr.l_max):
        raise ValueError(f"{pyramid!r} does not cover levels [{apr.l_min}, {apr.l_max}]")
    for level in apr.access.levels:
        if max(pyramid[level].shape) > max_extent:
            raise CapabilityError(f"stencil {pyramid[level].shape} at level {level} exceeds "
                                  f"the maximum extent {max_extent}")
    out_dtype = np.float64 if values.dtype == np.float64 else np.float32
    out = np.zeros(apr.n_particles, dtype=out_dtype)
    if apr.n_particles == 0:
        return out
    vals64 = values.astype(np.float64, copy=False)
    if tree_values is None and apr.n_tree:
        tree_values = fill_tree(apr, vals64, threads)
    if row_index is None and skip_empty_rows:
        row_index = nonempty_row_index(apr)
    units = _work_units(apr, row_index, skip_empty_rows)
    args = {level: _kernel_args(apr, vals64, tree_values, level) for level in apr.access.levels}
    zero_pad = pad_mode == "zero"

    def work(k):
        level, z, xs, ylo, yhi = units[k]
        nz, nx, ny = apr.access.level_dims(level)
        _kernels.convolve_slice(level, z, xs, ylo, yhi, pyramid[level].weights, zero_pad, out,
                                nz, nx, ny, *args[level])

    run_dynamic(len(units), work, threads)
    return out


def convolve_pixels(volume, w, pad_mode="reflect", method="auto") -> np.ndarray:
    """Dense true convolution of a pixel volume.

    ``method`` is ``direct``, ``fft`` or ``auto`` (FFT above 125 taps).
    Float64 input stays float64; everything else is computed in float64 and
    returned as float32.
    """
    if pad_mode not in PAD_MODES:
        raise ValueError(f"pad_mode must be one of {PAD_MODES}")
    w = _as_stencil(w).weights
    src = np.asarray(volume)
    out_dtype = np.float64 if src.dtype == np.float64 else np.float32
    v = check_volume(src, dtype=np.float64)
    if method == "auto":
        method = "fft" if w.size > 125 else "direct"
    if method == "direct":
        mode = "reflect" if pad_mode == "reflect" else "constant"
        res = ndimage.convolve(v, w, mode=mode, cval=0.0)
    elif method == "fft":
        pad = [(k // 2, k // 2) for k in w.shape]
        padded = np.pad(v, pad, mode="symmetric" if pad_mode == "reflect" else "constant")
        res = signal.fftconvolve(padded, w, mode="valid")
    else:
        raise ValueError(f"unknown method {method!r}")
    return res.astype(out_dtype, copy=False)
