"""Compiled inner loops: row reconstruction, per-slice convolution, tree reduction.

All kernels release the GIL so the dynamic scheduler can run them on several
threads.  Structures are passed as int64 arrays (see ``LinearAccess.y64`` etc.).
"""

import numpy as np
from numba import njit

_JIT = dict(nogil=True, cache=True)


@njit(**_JIT)
def reflect_index(p, n):
    """Half-sample symmetric reflection of ``p`` into ``[0, n)``."""
    period = 2 * n
    m = p % period
    if m < 0:
        m += period
    if m >= n:
        m = period - 1 - m
    return m


@njit(**_JIT)
def fill_row(line, level, zz, xx, a, b,
             l_min, l_y, l_beg, l_end, l_off, l_xd, l_vals,
             t_ok, t_y, t_beg, t_end, t_off, t_xd, t_vals):
    """Write the level-``level`` reconstruction of row (zz, xx) into ``line[a:b]``.

    A level-l cell holds either a leaf at level <= l (possibly much coarser) or
    an interior tree node at level l; these sources are disjoint.
    """
    need = b - a
    filled = 0
    if t_ok:
        row = t_off[level] + zz * t_xd[level] + xx
        rb = t_beg[row]
        re = t_end[row]
        if re > rb:
            j = rb + np.searchsorted(t_y[rb:re], a)
            while j < re:
                y = t_y[j]
                if y >= b:
                    break
                line[y] = t_vals[j]
                filled += 1
                j += 1
    lp = level
    while lp >= l_min and filled < need:
        d = level - lp
        row = l_off[lp] + (zz >> d) * l_xd[lp] + (xx >> d)
        rb = l_beg[row]
        re = l_end[row]
        if re > rb:
            i = rb + np.searchsorted(l_y[rb:re], a >> d)
            while i < re:
                y0 = l_y[i] << d
                if y0 >= b:
                    break
                y1 = min(y0 + (1 << d), b)
                y0 = max(y0, a)
                v = l_vals[i]
                for y in range(y0, y1):
                    line[y] = v
                filled += y1 - y0
                i += 1
        lp -= 1
    return filled


@njit(**_JIT)
def fill_patch(buf, level, z0, x0, nzp, nxp, nz, nx, ny, ylo, yhi, zero_pad,
               l_min, l_y, l_beg, l_end, l_off, l_xd, l_vals,
               t_ok, t_y, t_beg, t_end, t_off, t_xd, t_vals):
    """Fill ``buf[nzp, nxp, yhi - ylo]`` with rows z0.., x0.. over y in [ylo, yhi)."""
    line = np.zeros(ny)
    a = max(0, ylo)
    b = min(ny, yhi)
    if ylo < 0 or yhi > ny:
        a = 0
        b = ny
    for iz in range(nzp):
        zz = z0 + iz
        if zero_pad and (zz < 0 or zz >= nz):
            buf[iz, :, :] = 0.0
            continue
        zm = reflect_index(zz, nz)
        for ix in range(nxp):
            xx = x0 + ix
            if zero_pad and (xx < 0 or xx >= nx):
                buf[iz, ix, :] = 0.0
                continue
            xm = reflect_index(xx, nx)
            fill_row(line, level, zm, xm, a, b,
                     l_min, l_y, l_beg, l_end, l_off, l_xd, l_vals,
                     t_ok, t_y, t_beg, t_end, t_off, t_xd, t_vals)
            for p in range(ylo, yhi):
                if 0 <= p < ny:
                    buf[iz, ix, p - ylo] = line[p]
                elif zero_pad:
                    buf[iz, ix, p - ylo] = 0.0
                else:
                    buf[iz, ix, p - ylo] = line[reflect_index(p, ny)]


@njit(**_JIT)
def _row_taps(acc, src, wrow, y0, span):
    # acc[k] += sum_jc wrow[jc] * src[y0 + jc + k], taps in descending jc
    for jc in range(wrow.shape[0] - 1, -1, -1):
        wv = wrow[jc]
        off = max(y0 + jc, 0)
        for k in range(span):
            acc[k] += wv * src[off + k]


@njit(**_JIT)
def convolve_slice(level, z, xs, ylo, yhi, w, zero_pad, out, nz, nx, ny,
                   l_min, l_y, l_beg, l_end, l_off, l_xd, l_vals,
                   t_ok, t_y, t_beg, t_end, t_off, t_xd, t_vals):
    """Convolve all level-``level`` particles of z-slice ``z`` whose row x is in ``xs``.

    A buffer of ``kz x kx x (ny + ky - 1)`` reconstructed values is kept as a
    ring over x; moving to the next x only fills the rows that entered the
    window.  Only y positions in ``[ylo - ry, yhi + ry)`` are reconstructed.
    """
    kz, kx, ky = w.shape
    rz = kz // 2
    rx = kx // 2
    ry = ky // 2
    buf = np.zeros((kz, kx, ny + ky - 1))
    line = np.zeros(ny)
    acc_line = np.zeros(ny)
    wf = w[::-1, ::-1, ::-1].copy()
    slot_of = np.full(kx, -(1 << 62), dtype=np.int64)
    lo = ylo - ry
    hi = yhi + ry
    a = max(0, lo)
    b = min(ny, hi)
    if lo < 0 or hi > ny:
        a = 0
        b = ny
    for t in range(xs.shape[0]):
        x = xs[t]
        for xx in range(x - rx, x + rx + 1):
            s = xx % kx
            if s < 0:
                s += kx
            if slot_of[s] == xx:
                continue
            slot_of[s] = xx
            x_out = xx < 0 or xx >= nx
            xm = reflect_index(xx, nx)
            for iz in range(kz):
                zz = z - rz + iz
                if zero_pad and (x_out or zz < 0 or zz >= nz):
                    for p in range(lo, hi):
                        buf[iz, s, p + ry] = 0.0
                    continue
                zm = reflect_index(zz, nz)
                fill_row(line, level, zm, xm, a, b,
                         l_min, l_y, l_beg, l_end, l_off, l_xd, l_vals,
                         t_ok, t_y, t_beg, t_end, t_off, t_xd, t_vals)
                for p in range(lo, hi):
                    if 0 <= p < ny:
                        buf[iz, s, p + ry] = line[p]
                    elif zero_pad:
                        buf[iz, s, p + ry] = 0.0
                    else:
                        buf[iz, s, p + ry] = line[reflect_index(p, ny)]
        row = l_off[level] + z * l_xd[level] + x
        i0 = l_beg[row]
        i1 = l_end[row]
        if i1 == i0:
            continue
        y0 = l_y[i0]
        y1 = l_y[i1 - 1] + 1
        # taps outer, positions inner: every output sums its taps in the same
        # order on both paths, so the choice of path never changes the bits
        if 4 * (i1 - i0) >= y1 - y0:
            span = y1 - y0
            for y in range(span):
                acc_line[y] = 0.0
            for ja in range(kz - 1, -1, -1):
                for jb in range(kx - 1, -1, -1):
                    s = (x - rx + jb) % kx
                    if s < 0:
                        s += kx
                    _row_taps(acc_line, buf[ja, s], wf[ja, jb], y0, span)
            for i in range(i0, i1):
                out[i] = acc_line[l_y[i] - y0]
        else:
            for i in range(i0, i1):
                y = l_y[i]
                acc = 0.0
                for ja in range(kz - 1, -1, -1):
                    for jb in range(kx - 1, -1, -1):
                        s = (x - rx + jb) % kx
                        if s < 0:
                            s += kx
                        for jc in range(ky - 1, -1, -1):
                            acc += wf[ja, jb, jc] * buf[ja, s, y + jc]
                out[i] = acc


@njit(**_JIT)
def _footprint(level, z, x, y, l_max, src_z, src_x, src_y):
    s = 1 << (l_max - level)
    ez = min((z + 1) * s, src_z) - z * s
    ex = min((x + 1) * s, src_x) - x * s
    ey = min((y + 1) * s, src_y) - y * s
    return float(ez * ex * ey)


@njit(**_JIT)
def reduce_to_parents(parent_level, pz, c_y, c_beg, c_end, c_off, c_xd, c_zd, c_level_ok,
                      c_vals, c_vols, use_footprint, l_max, src_z, src_x, src_y,
                      p_y, p_beg, p_end, p_off, p_xd, sums, vols):
    """Accumulate children at ``parent_level + 1`` onto the parents in z-slice ``pz``.

    Children are leaves (``use_footprint``: value times clipped footprint
    volume) or tree nodes (their own accumulated sums and volumes).  Each
    parent row owns the 2x2 block of child rows below it.  Returns -1 when a
    child has no parent (corrupt structure), else 0.
    """
    if not c_level_ok:
        return 0
    cl = parent_level + 1
    for px in range(p_xd[parent_level]):
        prow = p_off[parent_level] + pz * p_xd[parent_level] + px
        pb = p_beg[prow]
        pe = p_end[prow]
        for dz in range(2):
            cz = 2 * pz + dz
            if cz >= c_zd[cl]:
                continue
            for dx in range(2):
                cx = 2 * px + dx
                if cx >= c_xd[cl]:
                    continue
                crow = c_off[cl] + cz * c_xd[cl] + cx
                j = pb
                for i in range(c_beg[crow], c_end[crow]):
                    target = c_y[i] >> 1
                    while j < pe and p_y[j] < target:
                        j += 1
                    if j >= pe or p_y[j] != target:
                        return -1
                    if use_footprint:
                        vol = _footprint(cl, cz, cx, c_y[i], l_max, src_z, src_x, src_y)
                        sums[j] += c_vals[i] * vol
                        vols[j] += vol
                    else:
                        sums[j] += c_vals[i]
                        vols[j] += c_vols[i]
    return 0
