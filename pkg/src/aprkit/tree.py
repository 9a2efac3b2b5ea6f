"""Interior nodes of the APR (the "APR tree") and their average-reduced values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._parallel import run_dynamic
from .core import APR, LinearAccess, _level_coordinates, get_row
from .exceptions import IntegrityError


@dataclass(frozen=True, eq=False)
class APRTree:
    """Interior node structure paired with its values."""

    access: LinearAccess
    values: np.ndarray


def init_tree_structure(access: LinearAccess) -> LinearAccess:
    """Interior-node structure: every ancestor of every leaf, deduplicated.

    Levels run from ``l_min - 1`` (a single root cell) to ``l_max - 1``.
    """
    l_min, l_max = access.level_min, access.level_max
    if l_max < 1:
        return LinearAccess.empty()
    dims = np.stack([access.z_dim, access.x_dim, access.y_dim], axis=1)[:l_max]
    grids = [None] * l_max
    child = None
    for level in range(l_max - 1, l_min - 2, -1):
        grid = np.zeros(tuple(dims[level]), dtype=bool)
        _, z, x, y = _level_coordinates(access, level + 1)
        grid[z >> 1, x >> 1, y >> 1] = True
        if child is not None:
            cz, cx, cy = np.nonzero(child)
            grid[cz >> 1, cx >> 1, cy >> 1] = True
        grids[level] = grid
        child = grid
    return LinearAccess.from_grids(l_min - 1, dims, grids)


def synchronized_parent_pass(apr_access: LinearAccess, tree_access: LinearAccess,
                             level, z, x, visitor):
    """Visit ``visitor(i_child, j_parent)`` for each particle of row (level, z, x).

    The parent row (level - 1, z // 2, x // 2) is walked forward in lock-step
    with the child row, so the pass costs one traversal of each row.
    """
    begin, end = get_row(apr_access, level, z, x)
    p_begin, p_end = get_row(tree_access, level - 1, z // 2, x // 2)
    child_y, parent_y = apr_access.y_idx, tree_access.y_idx
    j = p_begin
    for i in range(begin, end):
        target = int(child_y[i]) // 2
        while j < p_end and int(parent_y[j]) < target:
            j += 1
        if j >= p_end or int(parent_y[j]) != target:
            raise IntegrityError(f"no parent for particle {i} at level {level}")
        visitor(i, j)


def _structure_args(access: LinearAccess):
    return (access.y64, access.row_begin, access.end64, access.offset64,
            access.x_dim, access.z_dim)


def fill_tree(apr: APR, values, threads=None) -> np.ndarray:
    """Average-reduce leaf values onto every interior node.

    Each node gets the footprint-volume-weighted mean of the leaves below it,
    i.e. the mean of the piecewise-constant reconstruction over its (clipped)
    cell.  Work is split by parent z-slice so every parent row is written by
    one worker, in a fixed order; the result does not depend on ``threads``.
    """
    access, tree = apr.access, apr.tree_access
    values = np.asarray(values)
    if values.shape != (access.n_particles,):
        raise ValueError(f"expected {access.n_particles} values, got {values.shape}")
    sums = np.zeros(tree.n_particles, dtype=np.float64)
    vols = np.zeros(tree.n_particles, dtype=np.float64)
    if tree.n_particles == 0:
        return sums
    leaf_vals = values.astype(np.float64, copy=False)
    sz, sx, sy = apr.source_dims
    l_max = access.level_max
    ly, lb, le, lo, lxd, lzd = _structure_args(access)
    ty, tb, te, to, txd, tzd = _structure_args(tree)
    status = []

    def leaf_unit(units):
        def work(k):
            plevel, pz = units[k]
            rc = _kernels.reduce_to_parents(
                plevel, pz, ly, lb, le, lo, lxd, lzd, True, leaf_vals, leaf_vals, True,
                l_max, sz, sx, sy, ty, tb, te, to, txd, sums, vols)
            if rc:
                status.append(plevel)
        return work

    def node_unit(plevel):
        def work(pz):
            rc = _kernels.reduce_to_parents(
                plevel, pz, ty, tb, te, to, txd, tzd, plevel + 1 <= tree.level_max,
                sums, vols, False, l_max, sz, sx, sy, ty, tb, te, to, txd, sums, vols)
            if rc:
                status.append(plevel)
        return work

    # step 1: every leaf contributes to its parent
    units = [(pl, pz) for pl in tree.levels for pz in range(int(tree.z_dim[pl]))
             if access.level_min <= pl + 1 <= l_max]
    run_dynamic(len(units), leaf_unit(units), threads)
    # step 2: interior nodes, finest level first, so children are final
    for plevel in range(tree.level_max - 1, tree.level_min - 1, -1):
        run_dynamic(int(tree.z_dim[plevel]), node_unit(plevel), threads)
    if status:
        raise IntegrityError(f"leaf or node without parent below level {status[0]}")
    if np.any(vols <= 0):
        raise IntegrityError("interior node without descendants")
    return sums / vols


def build_tree(apr: APR, values, threads=None) -> APRTree:
    return APRTree(apr.tree_access, fill_tree(apr, values, threads))
