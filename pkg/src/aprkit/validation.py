"""Input validation helpers shared by the functional and estimator APIs."""

import numpy as np


def check_volume(volume, dtype=np.float32, copy=False) -> np.ndarray:
    """Return ``volume`` as a C-contiguous 3D array of ``dtype``.

    Arrays with fewer than three dimensions get leading unit axes; unsigned
    16-bit (and 8-bit) input is converted.  Non-finite values are rejected.
    """
    arr = np.asarray(volume)
    if arr.ndim == 0 or arr.ndim > 3:
        raise ValueError(f"expected a 1D-3D volume, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("volume is empty")
    while arr.ndim < 3:
        arr = arr[np.newaxis]
    if arr.dtype.kind not in "uif":
        raise TypeError(f"unsupported element type {arr.dtype}")
    out = np.ascontiguousarray(arr, dtype=dtype)
    if copy and out is arr:
        out = out.copy()
    if not np.isfinite(out).all():
        raise ValueError("volume contains non-finite values")
    return out


def check_values(values, n_particles, dtype=None) -> np.ndarray:
    """Validate a particle value vector against a particle count."""
    arr = np.asarray(values)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    if arr.shape != (n_particles,):
        raise ValueError(f"expected {n_particles} particle values, got shape {arr.shape}")
    return arr


def check_positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
