"""Synthetic phantoms, quality and memory metrics, and the benchmark suite.

Random numbers come from numpy's ``Philox`` counter-based generator
(4x64-bit counter, 2x64-bit key) seeded with the phantom's ``seed`` field, so fixtures are
reproducible on any platform.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .build import BuildParams, build_apr
from .conv import StencilPyramid, convolve_apr, convolve_pixels, gaussian_stencil, \
    nonempty_row_index
from .core import APR, computational_ratio, level_geometry
from .io import access_array_bytes
from .tree import fill_tree
from ._parallel import resolve_threads


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _finish(vol, blur_sigma, noise_sigma, rng):
    if blur_sigma > 0:
        vol = ndimage.gaussian_filter(vol, blur_sigma, mode="reflect")
    if noise_sigma > 0:
        vol = vol + rng.normal(0.0, noise_sigma, vol.shape)
    return vol.astype(np.float32)


@dataclass(frozen=True)
class SphereSpec:
    """Randomly placed solid spheres on a constant background."""

    dims: tuple = (64, 64, 64)
    object_count: int = 8
    radius_range: tuple = (3.0, 8.0)
    intensity: float = 1000.0
    background: float = 100.0
    blur_sigma: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"bad dims {self.dims}")
        if self.object_count < 0:
            raise ValueError("object_count must be >= 0")
        r0, r1 = self.radius_range
        if not 0 < r0 <= r1 or r1 >= min(self.dims) / 2:
            raise ValueError(f"radius range {self.radius_range} must satisfy 0 < r_min <= r_max < n/2")


def generate_spheres(spec: SphereSpec) -> np.ndarray:
    """Spheres with centers and radii drawn uniformly; overlapping spheres share the intensity."""
    rng = _rng(spec.seed)
    dims = np.asarray(spec.dims)
    vol = np.full(spec.dims, spec.background, dtype=np.float64)
    r0, r1 = spec.radius_range
    for _ in range(spec.object_count):
        r = rng.uniform(r0, r1)
        c = rng.uniform(r, dims - r)
        lo = np.maximum(np.floor(c - r).astype(int), 0)
        hi = np.minimum(np.ceil(c + r).astype(int) + 1, dims)
        zz, xx, yy = np.ogrid[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
        inside = (zz - c[0]) ** 2 + (xx - c[1]) ** 2 + (yy - c[2]) ** 2 <= r * r
        vol[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]][inside] = spec.intensity
    return _finish(vol, spec.blur_sigma, spec.noise_sigma, rng)


@dataclass(frozen=True)
class CylinderSpec:
    """Hollow axis-aligned cylinders: shells with ``r_outer - thickness <= d <= r_outer``."""

    dims: tuple = (64, 64, 64)
    object_count: int = 6
    radius_range: tuple = (4.0, 10.0)
    thickness: float = 2.0
    intensity: float = 1000.0
    background: float = 100.0
    blur_sigma: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"bad dims {self.dims}")
        if self.object_count < 0:
            raise ValueError("object_count must be >= 0")
        r0, r1 = self.radius_range
        if not 0 < r0 <= r1 or r1 >= min(self.dims) / 2:
            raise ValueError(f"radius range {self.radius_range} must satisfy 0 < r_min <= r_max < n/2")
        if not self.thickness > 0:
            raise ValueError("thickness must be positive")


def cylinder_shell(dims, axis, center, r_outer, thickness) -> np.ndarray:
    """Boolean mask of one shell around a line parallel to ``axis`` through ``center`` (2 coords)."""
    others = [a for a in range(3) if a != axis]
    grids = np.ogrid[0:dims[0], 0:dims[1], 0:dims[2]]
    d2 = (grids[others[0]] - center[0]) ** 2 + (grids[others[1]] - center[1]) ** 2
    r_inner = max(r_outer - thickness, 0.0)
    mask = (d2 >= r_inner ** 2) & (d2 <= r_outer ** 2)
    return np.broadcast_to(mask, tuple(dims))


def generate_cylinders(spec: CylinderSpec) -> np.ndarray:
    rng = _rng(spec.seed)
    dims = tuple(int(d) for d in spec.dims)
    vol = np.full(dims, spec.background, dtype=np.float64)
    r0, r1 = spec.radius_range
    for _ in range(spec.object_count):
        axis = int(rng.integers(0, 3))
        r = rng.uniform(r0, r1)
        others = [dims[a] for a in range(3) if a != axis]
        center = (rng.uniform(r, others[0] - r), rng.uniform(r, others[1] - r))
        vol[cylinder_shell(dims, axis, center, r, spec.thickness)] = spec.intensity
    return _finish(vol, spec.blur_sigma, spec.noise_sigma, rng)


# --- metrics -----------------------------------------------------------------

def effective_throughput(pixel_dims, bytes_per_element, wall_time) -> float:
    """Pixel bytes processed per second (decimal units are the caller's concern)."""
    if not wall_time > 0:
        raise ValueError("wall_time must be positive")
    return float(np.prod(pixel_dims, dtype=np.float64)) * bytes_per_element / wall_time


@dataclass(frozen=True)
class MemoryEstimate:
    apr_bytes: int
    pixel_bytes: int
    values_bytes: int
    tree_values_bytes: int
    access_bytes: int
    tree_access_bytes: int

    @property
    def ratio(self) -> float:
        return self.apr_bytes / self.pixel_bytes

    def __iter__(self):
        return iter((self.apr_bytes, self.pixel_bytes))


def memory_estimate(apr: APR, bytes_in=4, bytes_out=4) -> MemoryEstimate:
    """Bytes needed to filter ``apr`` versus its pixel image.

    The APR side counts input and output particle values, 32-bit tree values,
    and both access structures with the array widths of the file format.
    """
    values = apr.n_particles * (bytes_in + bytes_out)
    tree_values = 4 * apr.n_tree
    acc = access_array_bytes(apr.access)
    tacc = access_array_bytes(apr.tree_access)
    return MemoryEstimate(values + tree_values + acc + tacc, apr.n_pixels * (bytes_in + bytes_out),
                          values, tree_values, acc, tacc)


def memory_estimate_from_counts(dims, n_particles, n_tree=None, bytes_in=4,
                                bytes_out=4) -> MemoryEstimate:
    """Same model as :func:`memory_estimate` from counts alone, without building.

    ``n_tree`` defaults to ``(n_particles - 1) // 7``, the interior-node count of
    a complete octree with ``n_particles`` leaves.
    """
    l_min, l_max, level_dims = level_geometry(tuple(int(d) for d in dims))
    n_particles = int(n_particles)
    if n_tree is None:
        n_tree = max(n_particles - 1, 0) // 7

    def structure(lo, hi, count):
        rows = sum(int(level_dims[l][0] * level_dims[l][1]) for l in range(lo, hi + 1))
        n_levels = hi + 1
        return 3 * 8 * n_levels + 8 * (n_levels + 1) + 8 * rows + 2 * count

    acc = structure(l_min, l_max, n_particles)
    tacc = structure(max(l_min - 1, 0), l_max - 1, n_tree) if l_max > 0 else 0
    n_pixels = int(np.prod(dims, dtype=np.int64))
    values = n_particles * (bytes_in + bytes_out)
    return MemoryEstimate(values + 4 * n_tree + acc + tacc, n_pixels * (bytes_in + bytes_out),
                          values, 4 * n_tree, acc, tacc)


def nrmse(reference, estimate) -> float:
    """Root mean squared error divided by the intensity range of ``reference``."""
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(estimate, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    rng = float(a.max() - a.min()) or 1.0
    return float(np.sqrt(np.mean((a - b) ** 2)) / rng)


def psnr(reference, estimate) -> float:
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(estimate, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return float("inf")
    rng = float(a.max() - a.min()) or 1.0
    return float(10.0 * np.log10(rng * rng / mse))


def ssim(reference, estimate, window=7, k1=0.01, k2=0.03) -> float:
    """Mean SSIM over uniform ``window``-cubed neighbourhoods (reflect boundaries)."""
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(estimate, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    rng = float(a.max() - a.min()) or 1.0
    c1, c2 = (k1 * rng) ** 2, (k2 * rng) ** 2

    def mean(x):
        return ndimage.uniform_filter(x, size=window, mode="reflect")

    mu_a, mu_b = mean(a), mean(b)
    var_a = mean(a * a) - mu_a ** 2
    var_b = mean(b * b) - mu_b ** 2
    cov = mean(a * b) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(s.mean())


def quality_metrics(reference, estimate):
    """``(psnr, ssim, nrmse)`` of ``estimate`` against ``reference``."""
    return psnr(reference, estimate), ssim(reference, estimate), nrmse(reference, estimate)


# --- suite -------------------------------------------------------------------

CSV_FIELDS = ("image_id", "dims", "cr", "op", "stencil_size", "wall_time_s",
              "effective_throughput_Bps", "memory_bytes_apr", "memory_bytes_pixels", "threads")


@dataclass(frozen=True)
class BenchRecord:
    image_id: str
    dims: str
    cr: float
    op: str
    stencil_size: int
    wall_time_s: float
    effective_throughput_Bps: float
    memory_bytes_apr: int
    memory_bytes_pixels: int
    threads: int


def write_csv(path_or_file, records: Iterable[BenchRecord]):
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for rec in records:
            writer.writerow(asdict(rec))
    finally:
        if own:
            fh.close()


def read_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(BenchRecord(
                image_id=row["image_id"], dims=row["dims"], cr=float(row["cr"]), op=row["op"],
                stencil_size=int(row["stencil_size"]), wall_time_s=float(row["wall_time_s"]),
                effective_throughput_Bps=float(row["effective_throughput_Bps"]),
                memory_bytes_apr=int(row["memory_bytes_apr"]),
                memory_bytes_pixels=int(row["memory_bytes_pixels"]), threads=int(row["threads"])))
    return out


def cr_sweep_specs(n=128, seed=7) -> list:
    """Sphere images whose APRs span CR from about 1 to several hundred at ``n``-cubed.

    The first tier is dense uniform noise (CR 1); the rest have decreasing
    sphere counts on a clean background.
    """
    dims = (n, n, n)
    s = n / 128.0
    tiers = [
        SphereSpec(dims, 0, (1.0, 2.0), noise_sigma=400.0, seed=seed),
        SphereSpec(dims, 2000, (2.0 * s, 5.0 * s), blur_sigma=1.0, seed=seed + 1),
        SphereSpec(dims, 400, (3.0 * s, 7.0 * s), blur_sigma=1.0, seed=seed + 2),
        SphereSpec(dims, 120, (3.0 * s, 8.0 * s), blur_sigma=1.0, seed=seed + 3),
        SphereSpec(dims, 40, (4.0 * s, 10.0 * s), blur_sigma=1.0, seed=seed + 4),
        SphereSpec(dims, 12, (5.0 * s, 12.0 * s), blur_sigma=1.0, seed=seed + 5),
        SphereSpec(dims, 4, (6.0 * s, 14.0 * s), blur_sigma=1.0, seed=seed + 6),
        SphereSpec(dims, 1, (8.0 * s, 16.0 * s), blur_sigma=1.0, seed=seed + 7),
        SphereSpec(dims, 1, (3.0 * s, 4.0 * s), blur_sigma=1.0, seed=seed + 8),
    ]
    return tiers


def _median_time(fn, repeats):
    fn()  # warm-up, discarded
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


@dataclass
class SuiteConfig:
    """Benchmark settings.  ``images`` maps image ids to volumes; ``None`` uses the CR sweep."""

    images: Optional[dict] = None
    stencil_sizes: Sequence[int] = (3, 5)
    repeats: int = 5
    threads: Optional[int] = None
    build: BuildParams = field(default_factory=BuildParams)
    n: int = 128
    seed: int = 7
    include_pixels: bool = True


def sweep_images(n=128, seed=7) -> dict:
    return {f"spheres_{i}_{spec.object_count}": generate_spheres(spec)
            for i, spec in enumerate(cr_sweep_specs(n, seed))}


def bench_apr(apr, values, size, repeats=5, threads=None, row_index=None):
    """Median wall time of one restricted Gaussian convolution including the tree fill."""
    pyr = StencilPyramid.restricted(gaussian_stencil(1.0, size), apr.l_min, apr.l_max)
    rows = row_index if row_index is not None else nonempty_row_index(apr)

    def run():
        tree = fill_tree(apr, values, threads)
        convolve_apr(apr, values, pyr, tree, threads=threads, row_index=rows)

    return _median_time(run, repeats)


def bench_pixels(volume, size, repeats=5):
    w = gaussian_stencil(1.0, size)
    return _median_time(lambda: convolve_pixels(volume, w, method="direct"), repeats)


def run_suite(config: SuiteConfig | None = None) -> list:
    """Build every image, time APR and pixel convolutions, return one record per run."""
    config = config or SuiteConfig()
    images = config.images if config.images is not None else sweep_images(config.n, config.seed)
    threads = resolve_threads(config.threads)
    records = []
    for image_id, vol in images.items():
        vol = np.asarray(vol, dtype=np.float32)
        apr, values = build_apr(vol, config.build)
        cr = computational_ratio(apr)
        mem = memory_estimate(apr)
        rows = nonempty_row_index(apr)
        dims = "x".join(str(d) for d in vol.shape)
        for size in config.stencil_sizes:
            t = bench_apr(apr, values, size, config.repeats, threads, rows)
            records.append(BenchRecord(image_id, dims, cr, "conv_apr", size, t,
                                       effective_throughput(vol.shape, 4, t), mem.apr_bytes,
                                       mem.pixel_bytes, threads))
            if config.include_pixels:
                t = bench_pixels(vol, size, config.repeats)
                records.append(BenchRecord(image_id, dims, cr, "conv_pixels", size, t,
                                           effective_throughput(vol.shape, 4, t), mem.apr_bytes,
                                           mem.pixel_bytes, threads))
    return records
