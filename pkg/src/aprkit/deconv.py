"""Richardson-Lucy deconvolution on pixel volumes and natively on APRs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .conv import (Stencil, StencilPyramid, _as_stencil, convolve_apr, convolve_pixels,
                   flip_stencil, nonempty_row_index)
from .core import APR
from .tree import fill_tree
from .validation import check_values, check_volume

__all__ = ["RLConfig", "rl_pixels", "rl_apr", "flip_stencil"]


@dataclass(frozen=True, eq=False)
class RLConfig:
    """Richardson-Lucy settings.

    The PSF is normalized to unit sum.  ``epsilon=None`` guards divisions with
    ``1e-6 * mean(observed)``.  The callback passed to the solvers is invoked
    every ``record_metrics_every`` iterations (0 disables it).
    """

    iterations: int
    psf: Stencil
    epsilon: Optional[float] = None
    record_metrics_every: int = 1
    pad_mode: str = "reflect"

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        w = _as_stencil(self.psf).weights
        if (w < 0).any() or not w.sum() > 0:
            raise ValueError("psf weights must be non-negative with a positive sum")
        object.__setattr__(self, "psf", Stencil(w / w.sum()))
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def guard(self, observed) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        return 1e-6 * float(np.mean(observed)) or 1e-12


def _report(cfg, callback, k, estimate):
    if callback is not None and cfg.record_metrics_every and k % cfg.record_metrics_every == 0:
        callback(k, estimate)


def rl_pixels(observed, cfg: RLConfig, callback: Callable | None = None) -> np.ndarray:
    """Deconvolve a pixel volume: ``i <- i * ((u / (i * w)) * w_flipped)``, from ``i = u``.

    ``callback(k, estimate)`` sees the estimate after iteration ``k`` (and k=0).
    """
    u = np.maximum(check_volume(observed, dtype=np.float64), 0.0)
    w, w_flip = cfg.psf, flip_stencil(cfg.psf)
    eps = cfg.guard(u)
    estimate = u.copy()
    _report(cfg, callback, 0, estimate)
    for k in range(1, cfg.iterations + 1):
        blurred = convolve_pixels(estimate, w, cfg.pad_mode)
        ratio = u / np.maximum(blurred, eps)
        estimate = estimate * convolve_pixels(ratio, w_flip, cfg.pad_mode)
        _report(cfg, callback, k, estimate)
    return estimate


def rl_apr(apr: APR, observed_values, cfg: RLConfig, callback: Callable | None = None,
           threads=None) -> np.ndarray:
    """Richardson-Lucy on particle values with the PSF restricted to every level.

    The restricted pyramids for the PSF and its flip are built once; the
    interior-node values are refilled before every convolution.
    """
    u = np.maximum(check_values(observed_values, apr.n_particles, np.float64), 0.0)
    pyr = StencilPyramid.restricted(cfg.psf, apr.l_min, apr.l_max)
    pyr_flip = StencilPyramid.restricted(flip_stencil(cfg.psf), apr.l_min, apr.l_max)
    rows = nonempty_row_index(apr)
    eps = cfg.guard(u)
    estimate = u.copy()
    _report(cfg, callback, 0, estimate)

    def apply(values, pyramid):
        tree = fill_tree(apr, values, threads)
        return convolve_apr(apr, values, pyramid, tree, cfg.pad_mode, threads, row_index=rows)

    for k in range(1, cfg.iterations + 1):
        ratio = u / np.maximum(apply(estimate, pyr), eps)
        estimate = estimate * apply(ratio, pyr_flip)
        _report(cfg, callback, k, estimate)
    return estimate
