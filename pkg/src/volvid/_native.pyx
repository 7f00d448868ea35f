# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of volvid._kernels_py.

Same contracts, same arithmetic; see that module for the reference
implementations. Index math must stay bit-identical (uint32 hash wraparound).
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport ceil, exp, floor

ctypedef fused floating:
    float
    double

cdef extern from *:
    """
    static const unsigned int VV_P0 = 1u;
    static const unsigned int VV_P1 = 2654435761u;
    static const unsigned int VV_P2 = 805459861u;
    """
    unsigned int VV_P0
    unsigned int VV_P1
    unsigned int VV_P2


def interp_gather_fwd(floating[:, ::1] table, long long[:, ::1] idx, floating[:, ::1] w):
    cdef Py_ssize_t n = idx.shape[0], k = idx.shape[1], f = table.shape[1]
    cdef Py_ssize_t i, j, c
    cdef long long row
    cdef floating wv
    out_np = np.zeros((n, f), dtype=np.asarray(table).dtype)
    cdef floating[:, ::1] out = out_np
    with nogil:
        for i in range(n):
            for j in range(k):
                row = idx[i, j]
                wv = w[i, j]
                for c in range(f):
                    out[i, c] += wv * table[row, c]
    return out_np


def interp_gather_bwd(floating[:, ::1] gout, long long[:, ::1] idx, floating[:, ::1] w, table_shape):
    cdef Py_ssize_t n = idx.shape[0], k = idx.shape[1], f = gout.shape[1]
    cdef Py_ssize_t i, j, c
    cdef long long row
    cdef floating wv
    buf_np = np.zeros(table_shape, dtype=np.asarray(gout).dtype)
    cdef floating[:, ::1] buf = buf_np
    with nogil:
        for i in range(n):
            for j in range(k):
                row = idx[i, j]
                wv = w[i, j]
                for c in range(f):
                    buf[row, c] += wv * gout[i, c]
    return buf_np


cdef inline unsigned int _hash3(long long ix, long long iy, long long iz, unsigned int mask) nogil:
    cdef unsigned int h = (<unsigned int> ix) * VV_P0
    h ^= (<unsigned int> iy) * VV_P1
    h ^= (<unsigned int> iz) * VV_P2
    return h & mask


def hash_gather_fwd(floating[:, ::1] table, floating[:, ::1] uvt,
                    long long[:, ::1] resolutions, long long table_size):
    cdef Py_ssize_t n = uvt.shape[0], levels = resolutions.shape[0], f = table.shape[1]
    cdef Py_ssize_t i, lv, c, a, corner
    cdef long long i0[3]
    cdef long long cidx[3]
    cdef floating frac[3]
    cdef floating s, wv
    cdef long long res_a, row
    cdef unsigned int mask = <unsigned int> (table_size - 1)
    out_np = np.zeros((n, levels * f), dtype=np.asarray(table).dtype)
    cdef floating[:, ::1] out = out_np
    with nogil:
        for i in range(n):
            for lv in range(levels):
                for a in range(3):
                    res_a = resolutions[lv, a]
                    s = uvt[i, a] * res_a
                    i0[a] = <long long> floor(s)
                    if i0[a] < 0:
                        i0[a] = 0
                    if i0[a] > res_a - 1:
                        i0[a] = res_a - 1
                    frac[a] = s - i0[a]
                for corner in range(8):
                    wv = 1.0
                    for a in range(3):
                        if (corner >> (2 - a)) & 1:
                            cidx[a] = i0[a] + 1
                            wv *= frac[a]
                        else:
                            cidx[a] = i0[a]
                            wv *= 1.0 - frac[a]
                    row = _hash3(cidx[0], cidx[1], cidx[2], mask) + lv * table_size
                    for c in range(f):
                        out[i, lv * f + c] += wv * table[row, c]
    return out_np


def hash_gather_bwd(floating[:, ::1] gout, floating[:, ::1] uvt,
                    long long[:, ::1] resolutions, long long table_size, table_shape):
    cdef Py_ssize_t n = uvt.shape[0], levels = resolutions.shape[0]
    cdef Py_ssize_t f = table_shape[1]
    cdef Py_ssize_t i, lv, c, a, corner
    cdef long long i0[3]
    cdef long long cidx[3]
    cdef floating frac[3]
    cdef floating s, wv
    cdef long long res_a, row
    cdef unsigned int mask = <unsigned int> (table_size - 1)
    buf_np = np.zeros(table_shape, dtype=np.asarray(gout).dtype)
    cdef floating[:, ::1] buf = buf_np
    with nogil:
        for i in range(n):
            for lv in range(levels):
                for a in range(3):
                    res_a = resolutions[lv, a]
                    s = uvt[i, a] * res_a
                    i0[a] = <long long> floor(s)
                    if i0[a] < 0:
                        i0[a] = 0
                    if i0[a] > res_a - 1:
                        i0[a] = res_a - 1
                    frac[a] = s - i0[a]
                for corner in range(8):
                    wv = 1.0
                    for a in range(3):
                        if (corner >> (2 - a)) & 1:
                            cidx[a] = i0[a] + 1
                            wv *= frac[a]
                        else:
                            cidx[a] = i0[a]
                            wv *= 1.0 - frac[a]
                    row = _hash3(cidx[0], cidx[1], cidx[2], mask) + lv * table_size
                    for c in range(f):
                        buf[row, c] += wv * gout[i, lv * f + c]
    return buf_np


def composite_scan(floating[::1] sigma, floating[::1] delta, long long[::1] offsets):
    cdef Py_ssize_t m = sigma.shape[0], n_rays = offsets.shape[0] - 1
    cdef Py_ssize_t r, i
    cdef floating acc, sd, tr
    dt = np.asarray(sigma).dtype
    w_np = np.empty(m, dtype=dt)
    t_np = np.empty(m, dtype=dt)
    cdef floating[::1] weights = w_np
    cdef floating[::1] trans = t_np
    with nogil:
        for r in range(n_rays):
            acc = 0.0
            for i in range(offsets[r], offsets[r + 1]):
                sd = sigma[i] * delta[i]
                tr = exp(-acc)
                trans[i] = tr
                weights[i] = tr * (1.0 - exp(-sd))
                acc += sd
    return w_np, t_np


def march_occupancy(floating[:, ::1] ou, floating[:, ::1] du,
                    floating[::1] near, floating[::1] far, double step,
                    const unsigned char[::1] occ_bytes,
                    long long nx, long long ny, long long nz):
    # per-ray step = span/ceil(span/step) (never coarser than requested) so
    # midpoint samples tile the chord exactly; see _kernels_py twin
    cdef Py_ssize_t n_rays = ou.shape[0]
    cdef Py_ssize_t r, k, total, pos
    cdef long long nk, vx, vy, vz, flat
    cdef double t, px, py, pz, span, dstep
    cdef long long nvox = nx * ny * nz
    off_np = np.zeros(n_rays + 1, dtype=np.int64)
    cdef long long[::1] offsets = off_np
    cdef long long count
    # pass 1: count survivors per ray
    with nogil:
        for r in range(n_rays):
            span = far[r] - near[r]
            nk = <long long> ceil(span / step) if span > 0 else 0
            if nk < 0:
                nk = 0
            dstep = span / nk if nk > 0 else 0.0
            count = 0
            for k in range(nk):
                t = near[r] + (k + 0.5) * dstep
                px = ou[r, 0] + t * du[r, 0]
                py = ou[r, 1] + t * du[r, 1]
                pz = ou[r, 2] + t * du[r, 2]
                if px < 0 or py < 0 or pz < 0:
                    continue
                vx = <long long> floor(px * nx)
                vy = <long long> floor(py * ny)
                vz = <long long> floor(pz * nz)
                if vx >= nx or vy >= ny or vz >= nz:
                    continue
                flat = vx + nx * (vy + ny * vz)
                if (occ_bytes[flat >> 3] >> (flat & 7)) & 1:
                    count += 1
            offsets[r + 1] = offsets[r] + count
    total = offsets[n_rays]
    t_np = np.empty(total, dtype=np.asarray(near).dtype)
    d_np = np.empty(total, dtype=np.asarray(near).dtype)
    cdef floating[::1] t_out = t_np
    cdef floating[::1] d_out = d_np
    with nogil:
        for r in range(n_rays):
            span = far[r] - near[r]
            nk = <long long> ceil(span / step) if span > 0 else 0
            if nk < 0:
                nk = 0
            dstep = span / nk if nk > 0 else 0.0
            pos = offsets[r]
            for k in range(nk):
                t = near[r] + (k + 0.5) * dstep
                px = ou[r, 0] + t * du[r, 0]
                py = ou[r, 1] + t * du[r, 1]
                pz = ou[r, 2] + t * du[r, 2]
                if px < 0 or py < 0 or pz < 0:
                    continue
                vx = <long long> floor(px * nx)
                vy = <long long> floor(py * ny)
                vz = <long long> floor(pz * nz)
                if vx >= nx or vy >= ny or vz >= nz:
                    continue
                flat = vx + nx * (vy + ny * vz)
                if (occ_bytes[flat >> 3] >> (flat & 7)) & 1:
                    t_out[pos] = <floating> t
                    d_out[pos] = <floating> dstep
                    pos += 1
    return t_np, d_np, off_np
