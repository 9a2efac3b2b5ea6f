"""Adaptive particle representation (APR) of volumetric images.

Build an APR from a pixel volume, filter it natively with level-aware
stencils, deconvolve it, and serialize it::

    apr, values = build_apr(volume, BuildParams(E=0.1))
    smoothed = convolve_apr(apr, values, StencilPyramid.for_apr(gaussian_stencil(1.0), apr))
"""

from .build import (BuildParams, ConstantSigma, LocalRangeSigma, apr_from_access, build_apr,
                    gradient_magnitude, level_function, local_scale, sample_particles,
                    solve_levels)
from .conv import (Stencil, StencilPyramid, box_stencil, central_difference_stencil,
                   convolve_apr, convolve_pixels, flip_stencil, gaussian_stencil,
                   identity_stencil, nonempty_row_index, rescale_stencil, restrict_stencil,
                   restrict_weights, sobel_stencil)
from .core import (APR, BuildInfo, LinearAccess, computational_ratio, for_each_particle,
                   get_row, level_geometry, level_map, max_neighbor_level_jump,
                   particle_position, resolution_level_at, validate)
from .deconv import RLConfig, rl_apr, rl_pixels
from .exceptions import (AprError, CapabilityError, FormatError, IntegrityError, MagicError,
                         RangeError, SizeMismatchError, TruncationError, ValidationFailed)
from .io import read_apr, read_volume, write_apr, write_volume
from .reconstruct import PatchSpec, reconstruct_full, reconstruct_level, reconstruct_patch
from .tree import APRTree, build_tree, fill_tree, init_tree_structure, synchronized_parent_pass

__version__ = "0.1.0"

__all__ = [
    "APR", "APRTree", "AprError", "BuildInfo", "BuildParams", "CapabilityError",
    "ConstantSigma", "FormatError", "IntegrityError", "LinearAccess", "LocalRangeSigma",
    "MagicError", "PatchSpec", "RLConfig", "RangeError", "SizeMismatchError", "Stencil",
    "StencilPyramid", "TruncationError", "ValidationFailed", "apr_from_access",
    "box_stencil", "build_apr", "build_tree", "central_difference_stencil",
    "computational_ratio", "convolve_apr", "convolve_pixels", "fill_tree", "flip_stencil",
    "for_each_particle", "gaussian_stencil", "get_row", "gradient_magnitude",
    "identity_stencil", "init_tree_structure", "level_function", "level_geometry",
    "level_map", "local_scale", "max_neighbor_level_jump", "nonempty_row_index",
    "particle_position", "read_apr", "read_volume", "reconstruct_full", "reconstruct_level",
    "reconstruct_patch", "rescale_stencil", "resolution_level_at", "restrict_stencil",
    "restrict_weights", "rl_apr", "rl_pixels", "sample_particles", "sobel_stencil",
    "solve_levels", "synchronized_parent_pass", "validate", "write_apr", "write_volume",
]
