"""Shared generators and brute-force oracles for the test suite."""

import numpy as np

from aprkit.build import apr_from_access, solve_levels
from aprkit.core import level_geometry


def random_targets(rng, dims, block=None):
    """Blocky random target levels over a pixel grid."""
    l_min, l_max, _ = level_geometry(dims)
    block = block or int(rng.choice([1, 2, 4, 8]))
    coarse = [max(1, -(-d // block)) for d in dims]
    t = rng.integers(l_min, l_max + 1, size=coarse)
    # bias toward coarse levels so that trees are non-trivial
    t = np.minimum(t, rng.integers(l_min, l_max + 1, size=coarse))
    for axis in range(3):
        t = np.repeat(t, block, axis=axis)
    return t[: dims[0], : dims[1], : dims[2]].astype(np.int8)


def random_apr(rng, dims):
    """A valid APR with random mixed levels over ``dims``."""
    access = solve_levels(random_targets(rng, dims))
    return apr_from_access(access)


def blob_image(rng, n=64, blobs=None, noise=0.02):
    """Sum of Gaussian blobs with additive noise, values in roughly [0, 1]."""
    blobs = blobs or int(rng.integers(3, 12))
    zz, xx, yy = np.mgrid[0:n, 0:n, 0:n].astype(np.float64)
    v = np.zeros((n, n, n))
    for _ in range(blobs):
        c = rng.uniform(0, n, 3)
        s = rng.uniform(n / 32, n / 8)
        a = rng.uniform(0.3, 1.0)
        v += a * np.exp(-((zz - c[0]) ** 2 + (xx - c[1]) ** 2 + (yy - c[2]) ** 2) / (2 * s * s))
    v += rng.normal(0, noise, v.shape)
    return v.astype(np.float32)


def brute_block_mean(image, level, l_max):
    """Mean of ``image`` over every level-``level`` cell (clipped at the border)."""
    s = 1 << (l_max - level)
    shape = [-(-d // s) for d in image.shape]
    sums = np.zeros(shape)
    counts = np.zeros(shape)
    z, x, y = np.indices(image.shape)
    np.add.at(sums, (z // s, x // s, y // s), image)
    np.add.at(counts, (z // s, x // s, y // s), 1)
    return sums / counts


def conv_matrix(w, shape, mode="zero"):
    """Explicit sparse matrix of ``o[i] = sum_a w[a] u[i + r - a]`` on ``shape``.

    ``mode`` is ``zero`` (outside values are 0) or ``reflect`` (half-sample
    symmetric, at most one reflection per side).
    """
    from scipy import sparse

    w = np.asarray(w, dtype=np.float64)
    shape = tuple(shape)
    n = int(np.prod(shape))
    idx = np.indices(shape).reshape(len(shape), -1)
    rows, cols, vals = [], [], []
    for a in np.ndindex(w.shape):
        src = [idx[d] + w.shape[d] // 2 - a[d] for d in range(len(shape))]
        ok = np.ones(n, dtype=bool)
        for d in range(len(shape)):
            if mode == "zero":
                ok &= (src[d] >= 0) & (src[d] < shape[d])
            else:
                s = src[d]
                s = np.where(s < 0, -s - 1, s)
                s = np.where(s >= shape[d], 2 * shape[d] - 1 - s, s)
                src[d] = s
        flat = np.ravel_multi_index([s[ok] for s in src], shape)
        rows.append(np.nonzero(ok)[0])
        cols.append(flat)
        vals.append(np.full(flat.size, w[a]))
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n))


def prolongation_matrix(coarse_shape, factor):
    """Piecewise-constant upsampling from ``coarse_shape`` to ``factor`` times finer."""
    from scipy import sparse

    fine_shape = tuple(c * factor for c in coarse_shape)
    idx = np.indices(fine_shape).reshape(len(fine_shape), -1)
    coarse = np.ravel_multi_index([i // factor for i in idx], coarse_shape)
    n_f = idx.shape[1]
    return sparse.csr_matrix((np.ones(n_f), (np.arange(n_f), coarse)),
                             shape=(n_f, int(np.prod(coarse_shape))))


def naive_convolve(v, w, mode="reflect"):
    """Triple loop true convolution with ``reflect`` (half-sample) or ``zero`` padding."""
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    r = [k // 2 for k in w.shape]
    out = np.zeros_like(v)

    def at(p, n):
        if 0 <= p < n:
            return p
        if mode == "zero":
            return None
        p = -p - 1 if p < 0 else 2 * n - 1 - p
        return p

    for i in np.ndindex(v.shape):
        acc = 0.0
        for a in np.ndindex(w.shape):
            q = [at(i[d] + r[d] - a[d], v.shape[d]) for d in range(3)]
            if None in q:
                continue
            acc += w[a] * v[tuple(q)]
        out[i] = acc
    return out


def per_level_oracle(apr, values, tree_values, pyramid, mode="reflect"):
    """Dense convolution of every level image, sampled at that level's particles."""
    from aprkit.conv import convolve_pixels
    from aprkit.reconstruct import reconstruct_level

    out = np.zeros(apr.n_particles)
    level, z, x, y = apr.access.coordinates()
    for lv in apr.access.levels:
        sel = level == lv
        if not sel.any():
            continue
        img = reconstruct_level(apr, np.asarray(values, np.float64), tree_values, lv)
        conv = convolve_pixels(img.astype(np.float64), pyramid[lv], mode, method="fft")
        out[sel] = conv[z[sel], x[sel], y[sel]]
    return out
