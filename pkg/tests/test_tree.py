import numpy as np
import pytest

from aprkit.build import apr_from_access, solve_levels
from aprkit.core import LinearAccess, level_geometry, validate
from aprkit.exceptions import IntegrityError
from aprkit.reconstruct import reconstruct_full
from aprkit.tree import build_tree, fill_tree, init_tree_structure, synchronized_parent_pass

from helpers import brute_block_mean, random_apr


def ancestor_set(access):
    level, z, x, y = access.coordinates()
    nodes = set()
    for l, a, b, c in zip(level.tolist(), z.tolist(), x.tolist(), y.tolist()):
        while l > 0:
            l, a, b, c = l - 1, a >> 1, b >> 1, c >> 1
            if l < access.level_min - 1:
                break
            nodes.add((l, a, b, c))
    return nodes


def dense_apr(dims):
    return apr_from_access(solve_levels(np.full(dims, 99, dtype=np.int8).clip(0, 50)))


def test_dense_two_cubed_has_single_root():
    apr = dense_apr((2, 2, 2))
    tree = apr.tree_access
    assert tree.n_particles == 1 and tree.level_min == 0 and tree.level_max == 0
    assert fill_tree(apr, np.arange(8.0))[0] == 3.5


def test_coarse_only_apr_tree_is_root():
    apr = apr_from_access(solve_levels(np.ones((8, 8, 8), dtype=np.int8)))
    assert apr.n_particles == 8
    assert apr.n_tree == 1


def test_tree_nodes_equal_ancestor_union(rng):
    for _ in range(4):
        apr = random_apr(rng, (32, 32, 32))
        tree = apr.tree_access
        level, z, x, y = tree.coordinates()
        got = set(zip(level.tolist(), z.tolist(), x.tolist(), y.tolist()))
        assert got == ancestor_set(apr.access)
        assert validate(tree, partition=False)


def test_synchronized_pass_examples():
    _, _, dims = level_geometry((16, 16, 16))
    child = LinearAccess.from_coordinates(4, dims, [4, 4, 4], [0, 0, 0], [0, 0, 0], [0, 1, 5])
    parent = LinearAccess.from_coordinates(3, dims[:4], [3, 3], [0, 0], [0, 0], [0, 2])
    pairs = []
    synchronized_parent_pass(child, parent, 4, 0, 0, lambda i, j: pairs.append((i, j)))
    assert pairs == [(0, 0), (1, 0), (2, 1)]


def test_synchronized_pass_missing_parent():
    _, _, dims = level_geometry((16, 16, 16))
    child = LinearAccess.from_coordinates(4, dims, [4], [0], [0], [7])
    parent = LinearAccess.from_coordinates(3, dims[:4], [3], [0], [0], [0])
    with pytest.raises(IntegrityError):
        synchronized_parent_pass(child, parent, 4, 0, 0, lambda i, j: None)


def test_synchronized_pass_matches_coordinate_lookup(rng):
    apr = random_apr(rng, (20, 17, 24))
    acc, tree = apr.access, apr.tree_access
    t_level, tz, tx, ty = tree.coordinates()
    index = {k: i for i, k in enumerate(zip(t_level.tolist(), tz.tolist(), tx.tolist(),
                                             ty.tolist()))}
    level, z, x, y = acc.coordinates()
    for lv in acc.levels:
        if lv <= tree.level_min:
            continue
        nz, nx, _ = acc.level_dims(lv)
        for zz in range(nz):
            for xx in range(nx):
                def visit(i, j):
                    key = (lv - 1, zz >> 1, xx >> 1, int(acc.y_idx[i]) >> 1)
                    assert index[key] == j
                synchronized_parent_pass(acc, tree, lv, zz, xx, visit)


def test_constant_values_fill_constant(rng):
    apr = random_apr(rng, (19, 23, 17))
    assert np.allclose(fill_tree(apr, np.full(apr.n_particles, 2.5)), 2.5)


def test_tree_values_are_footprint_means(rng):
    for dims in [(32, 32, 32), (21, 30, 17)]:
        apr = random_apr(rng, dims)
        values = rng.random(apr.n_particles)
        tv = fill_tree(apr, values)
        full = reconstruct_full(apr, values)
        level, z, x, y = apr.tree_access.coordinates()
        for lv in apr.tree_access.levels:
            ref = brute_block_mean(full, lv, apr.l_max)
            sel = level == lv
            assert np.allclose(tv[sel], ref[z[sel], x[sel], y[sel]], rtol=1e-10)


def test_mean_conservation(rng):
    apr = random_apr(rng, (27, 14, 31))
    values = rng.random(apr.n_particles)
    full = reconstruct_full(apr, values)
    root = fill_tree(apr, values)[0]
    assert root == pytest.approx(full.mean(), rel=1e-12)


def test_fill_is_thread_count_independent(rng):
    apr = random_apr(rng, (32, 32, 32))
    values = rng.random(apr.n_particles)
    ref = fill_tree(apr, values, threads=1)
    for t in (2, 3, 8):
        assert np.array_equal(fill_tree(apr, values, threads=t), ref)


def test_build_tree_and_shape_check(rng):
    apr = random_apr(rng, (8, 8, 8))
    t = build_tree(apr, np.ones(apr.n_particles))
    assert t.values.shape == (apr.n_tree,)
    with pytest.raises(ValueError):
        fill_tree(apr, np.ones(apr.n_particles + 1))


def test_init_tree_structure_on_single_pixel():
    apr = dense_apr((1, 1, 1))
    assert init_tree_structure(apr.access).n_particles == 0
    assert fill_tree(apr, np.ones(1)).size == 0
