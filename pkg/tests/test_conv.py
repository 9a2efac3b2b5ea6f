import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aprkit.build import apr_from_access, sample_particles, solve_levels
from aprkit.conv import (Stencil, StencilPyramid, box_stencil, central_difference_stencil,
                         convolve_apr, convolve_pixels, flip_stencil, gaussian_stencil,
                         identity_stencil, nonempty_row_index, rescale_stencil,
                         restrict_stencil, restrict_weights, sobel_stencil)
from aprkit.exceptions import CapabilityError
from aprkit.tree import fill_tree

from helpers import (conv_matrix, naive_convolve, per_level_oracle, prolongation_matrix,
                     random_apr)


# --- stencils -----------------------------------------------------------------

def test_stencil_validation():
    with pytest.raises(ValueError):
        Stencil(np.ones((2, 3, 3)))
    with pytest.raises(ValueError):
        Stencil(np.full((3, 3, 3), np.inf))
    assert Stencil(np.ones(3)).shape == (1, 1, 3)


def test_flip_examples(rng):
    assert np.array_equal(flip_stencil([1, 2, 3]).weights.ravel(), [3, 2, 1])
    g = gaussian_stencil(1.5)
    assert flip_stencil(g) == g
    w = Stencil(rng.random((3, 5, 1)))
    assert flip_stencil(flip_stencil(w)) == w


def test_rescale_examples():
    cd = Stencil([-0.5, 0.0, 0.5])
    assert rescale_stencil(cd, 0) == cd
    assert np.allclose(rescale_stencil(cd, 1).weights.ravel(), [-0.25, 0, 0.25])


def test_restrict_identity_and_delta_zero(rng):
    w = Stencil(rng.random((3, 3, 3)))
    assert restrict_stencil(w, 0) == w
    for delta in range(4):
        assert restrict_stencil(identity_stencil(), delta) == identity_stencil()


def test_restrict_size_and_sum(rng):
    for k in (3, 5, 7, 13):
        w = rng.random((k, k, k))
        for delta in (1, 2, 3):
            c = restrict_weights(w, delta)
            r = k // 2
            assert c.shape == (2 * -(-r // 2 ** delta) + 1,) * 3
            assert c.sum() == pytest.approx(w.sum(), rel=1e-12)


@pytest.mark.parametrize("mode", ["zero", "reflect"])
def test_restriction_matches_matrix_oracle_1d(rng, mode):
    for _ in range(20):
        k = int(rng.choice([3, 5, 7]))
        delta = int(rng.integers(1, 3))
        s = 1 << delta
        n_c = int(rng.integers(max(2, k // s), 16 // s + 1))
        w = rng.normal(size=k)
        x = rng.normal(size=n_c)
        P = prolongation_matrix((n_c,), s)
        R = P.T / s
        K = conv_matrix(w, (n_c * s,), mode)
        Kc = conv_matrix(restrict_weights(w, delta), (n_c,), mode)
        assert np.allclose(R @ (K @ (P @ x)), Kc @ x, atol=1e-12)


def test_presets():
    assert np.allclose(box_stencil(3).weights.sum(), 1.0)
    assert np.allclose(gaussian_stencil(2.0, 13).weights.sum(), 1.0)
    assert gaussian_stencil(2.0, 13).shape == (13, 13, 13)
    cd = central_difference_stencil(2).weights
    assert cd.shape == (1, 1, 3) and cd.ravel().tolist() == [0.5, 0.0, -0.5]
    s = sobel_stencil(0).weights
    assert s.shape == (3, 3, 3) and s.sum() == 0.0
    assert s[0].sum() == pytest.approx(0.5)


def test_pyramid_modes():
    w = gaussian_stencil(1.0, 5)
    p = StencilPyramid.restricted(w, 1, 4)
    assert p.covers(1, 4) and not p.covers(0, 4)
    assert p[4] == w and p[2] == restrict_stencil(w, 2)
    q = StencilPyramid.rescaled(w, 1, 4)
    assert np.allclose(q[2].weights, w.weights / 4)
    assert StencilPyramid.uniform(w, 1, 4)[1] == w
    assert p.flipped()[3] == flip_stencil(p[3])


# --- pixel convolution ---------------------------------------------------------

@pytest.mark.parametrize("mode", ["reflect", "zero"])
@pytest.mark.parametrize("method", ["direct", "fft"])
def test_convolve_pixels_matches_naive(rng, mode, method):
    v = rng.random((8, 8, 8))
    w = rng.normal(size=(3, 3, 3))
    assert np.allclose(convolve_pixels(v, w, mode, method), naive_convolve(v, w, mode),
                       atol=1e-6)


def test_convolve_pixels_asymmetric_orientation(rng):
    v = rng.random((6, 7, 5))
    w = rng.normal(size=(1, 3, 5))
    assert np.allclose(convolve_pixels(v, w), naive_convolve(v, w), atol=1e-12)


def test_convolve_pixels_trivial():
    v = np.full((6, 6, 6), 3.0, dtype=np.float32)
    assert np.array_equal(convolve_pixels(v, identity_stencil()), v)
    assert np.allclose(convolve_pixels(v, box_stencil(3)), 3.0)
    assert convolve_pixels(v, box_stencil(3)).dtype == np.float32


# --- APR convolution --------------------------------------------------------------

@pytest.mark.parametrize("k", [1, 3, 5, 13])
def test_apr_convolution_oracle(rng, k):
    for _ in range(3):
        apr = random_apr(rng, tuple(int(d) for d in rng.integers(14, 33, 3)))
        values = rng.random(apr.n_particles)
        tv = fill_tree(apr, values)
        for mode in ("reflect", "zero"):
            pyr = StencilPyramid.restricted(rng.normal(size=(k, k, k)), apr.l_min, apr.l_max)
            got = convolve_apr(apr, values, pyr, tv, mode)
            ref = per_level_oracle(apr, values, tv, pyr, mode)
            assert np.max(np.abs(got - ref)) <= 1e-9 * max(1.0, np.abs(ref).max())


def test_identity_pyramid_is_exact(rng):
    apr = random_apr(rng, (20, 20, 20))
    values = rng.random(apr.n_particles).astype(np.float32)
    pyr = StencilPyramid.restricted(identity_stencil(), apr.l_min, apr.l_max)
    assert np.array_equal(convolve_apr(apr, values, pyr), values)


def test_dense_apr_equals_pixel_convolution(rng):
    v = rng.random((16, 12, 20))
    target = np.full(v.shape, 99, dtype=np.int8)
    apr = apr_from_access(solve_levels(np.minimum(target, 5)))
    assert apr.n_particles == v.size
    values = sample_particles(v, apr.access).astype(np.float64)
    w = rng.normal(size=(5, 5, 5))
    pyr = StencilPyramid.restricted(w, apr.l_min, apr.l_max)
    got = convolve_apr(apr, values, pyr)
    ref = convolve_pixels(v.astype(np.float32).astype(np.float64), w)
    assert np.allclose(got, ref.ravel(), atol=1e-10)


def test_linearity(rng):
    apr = random_apr(rng, (24, 24, 24))
    u, v = rng.random(apr.n_particles), rng.random(apr.n_particles)
    pyr = StencilPyramid.restricted(rng.normal(size=(5, 5, 5)), apr.l_min, apr.l_max)
    lhs = convolve_apr(apr, 2.0 * u - 3.0 * v, pyr)
    rhs = 2.0 * convolve_apr(apr, u, pyr) - 3.0 * convolve_apr(apr, v, pyr)
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_constant_field_restricted(rng):
    apr = random_apr(rng, (24, 17, 30))
    w = rng.random((5, 5, 5))
    pyr = StencilPyramid.restricted(w, apr.l_min, apr.l_max)
    out = convolve_apr(apr, np.full(apr.n_particles, 2.0), pyr)
    assert np.allclose(out, 2.0 * w.sum(), rtol=1e-12)


def test_bit_identical_threads_and_skip(rng):
    apr = random_apr(rng, (32, 32, 32))
    values = rng.random(apr.n_particles).astype(np.float32)
    pyr = StencilPyramid.restricted(rng.normal(size=(5, 5, 5)), apr.l_min, apr.l_max)
    ref = convolve_apr(apr, values, pyr, threads=1)
    for t in (2, 4):
        for skip in (True, False):
            assert np.array_equal(convolve_apr(apr, values, pyr, threads=t, skip_empty_rows=skip),
                                  ref)


def test_capability_error(rng):
    apr = random_apr(rng, (16, 16, 16))
    pyr = StencilPyramid.uniform(np.ones((15, 1, 1)), apr.l_min, apr.l_max)
    with pytest.raises(CapabilityError):
        convolve_apr(apr, np.ones(apr.n_particles), pyr)
    with pytest.raises(ValueError):
        convolve_apr(apr, np.ones(apr.n_particles),
                     StencilPyramid.uniform(identity_stencil(), apr.l_min + 1, apr.l_max))


def test_rescaled_gradient_on_ramp(rng):
    n = 32
    target = np.full((n, n, n), 3, dtype=np.int8)
    target[:, :, n // 2:] = 5
    apr = apr_from_access(solve_levels(target))
    ramp = np.broadcast_to(np.arange(n, dtype=np.float64), (n, n, n))
    values = sample_particles(ramp, apr.access).astype(np.float64)
    pyr = StencilPyramid.rescaled(central_difference_stencil(2), apr.l_min, apr.l_max)
    grad = convolve_apr(apr, values, pyr)
    level, z, x, y = apr.access.coordinates()
    interior = np.array([
        (y[i] > 0 and y[i] < apr.access.y_dim[level[i]] - 1
         and _same_level_neighbours(apr, level[i], z[i], x[i], y[i]))
        for i in range(apr.n_particles)])
    assert interior.sum() > 100
    assert np.allclose(grad[interior], 1.0, atol=1e-12)


def _same_level_neighbours(apr, level, z, x, y):
    from aprkit.core import level_map
    lm = getattr(apr, "_lm_cache", None)
    if lm is None:
        lm = level_map(apr.access)
        object.__setattr__(apr, "_lm_cache", lm)
    s = 1 << (apr.l_max - level)
    lo = [max(0, (c - 1) * s) for c in (z, x, y)]
    hi = [min(lm.shape[d], (c + 2) * s) for d, c in enumerate((z, x, y))]
    return bool(np.all(lm[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] == level))


def test_nonempty_row_index_matches_scan(rng):
    apr = random_apr(rng, (20, 25, 30))
    ri = nonempty_row_index(apr)
    acc = apr.access
    for level in acc.levels:
        nz, nx, _ = acc.level_dims(level)
        rows = []
        for z in range(nz):
            for x in range(nx):
                r = int(acc.level_offset[level]) + z * nx + x
                b = int(acc.xz_end[r - 1]) if r else 0
                e = int(acc.xz_end[r])
                if e > b:
                    rows.append((z, x, int(acc.y_idx[b]), int(acc.y_idx[e - 1])))
        got = list(zip(ri[level].z.tolist(), ri[level].x.tolist(), ri[level].y_min.tolist(),
                       ri[level].y_max.tolist()))
        assert got == rows


def test_nonempty_row_index_dense_and_empty_levels():
    apr = apr_from_access(solve_levels(np.full((8, 8, 8), 3, dtype=np.int8)))
    ri = nonempty_row_index(apr)
    assert len(ri[3]) == 64 and set(ri[3].y_min.tolist()) == {0} and set(ri[3].y_max.tolist()) == {7}
    assert len(ri[1]) == 0 and len(ri[2]) == 0


@settings(max_examples=20, deadline=None)
@given(st.tuples(st.integers(2, 20), st.integers(2, 20), st.integers(2, 20)),
       st.sampled_from([1, 3, 5]), st.integers(0, 2 ** 32 - 1))
def test_apr_convolution_oracle_property(dims, k, seed):
    rng = np.random.default_rng(seed)
    apr = random_apr(rng, dims)
    values = rng.random(apr.n_particles)
    tv = fill_tree(apr, values)
    pyr = StencilPyramid.restricted(rng.normal(size=(k, k, k)), apr.l_min, apr.l_max)
    got = convolve_apr(apr, values, pyr, tv)
    ref = per_level_oracle(apr, values, tv, pyr)
    assert np.allclose(got, ref, atol=1e-9)
