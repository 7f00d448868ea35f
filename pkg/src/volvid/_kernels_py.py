"""Pure-numpy implementations of the hot kernels.

Mirrors volvid._native function-for-function; volvid.backend picks whichever
is available. Keep the arithmetic in lockstep with the .pyx file — both must
produce the same lattice indices and the same interpolation weights.
"""

import numpy as np

HASH_PRIMES = (np.uint32(1), np.uint32(2654435761), np.uint32(805459861))

_CORNERS = np.array(
    [[(c >> 2) & 1, (c >> 1) & 1, c & 1] for c in range(8)], dtype=np.int64
)


def interp_gather_fwd(table, idx, w):
    # out[n] = sum_k w[n,k] * table[idx[n,k]]
    return np.einsum("nkf,nk->nf", table[idx], w.astype(table.dtype, copy=False))


def interp_gather_bwd(gout, idx, w, table_shape):
    m, f = table_shape
    contrib = w[:, :, None] * gout[:, None, :]  # [N,K,F]
    flat = idx.ravel()
    cf = contrib.reshape(-1, f)
    buf = np.empty(table_shape, dtype=gout.dtype)
    for c in range(f):
        buf[:, c] = np.bincount(flat, weights=cf[:, c], minlength=m)
    return buf


def _lattice(uvt, res_l):
    """Corner indices and trilinear weights for one level."""
    # keep the scale in the input dtype so f32 runs match the compiled kernel
    s = uvt * res_l.astype(uvt.dtype)  # [N,3]
    i0 = np.floor(s).astype(np.int64)
    np.clip(i0, 0, res_l - 1, out=i0)
    frac = s - i0
    corners = i0[:, None, :] + _CORNERS[None, :, :]  # [N,8,3]
    w = np.prod(np.where(_CORNERS[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :]), axis=2)
    return corners, w


def _hash_corners(corners, table_size):
    c = corners.astype(np.uint32)
    h = c[..., 0] * HASH_PRIMES[0] ^ c[..., 1] * HASH_PRIMES[1] ^ c[..., 2] * HASH_PRIMES[2]
    return (h & np.uint32(table_size - 1)).astype(np.int64)


def hash_gather_fwd(table, uvt, resolutions, table_size):
    n = uvt.shape[0]
    levels = resolutions.shape[0]
    f = table.shape[1]
    out = np.empty((n, levels * f), dtype=table.dtype)
    for lv in range(levels):
        corners, w = _lattice(uvt, resolutions[lv])
        idx = _hash_corners(corners, table_size) + lv * table_size
        out[:, lv * f : (lv + 1) * f] = interp_gather_fwd(table, idx, w)
    return out


def hash_gather_bwd(gout, uvt, resolutions, table_size, table_shape):
    levels = resolutions.shape[0]
    f = table_shape[1]
    buf = np.zeros(table_shape, dtype=gout.dtype)
    for lv in range(levels):
        corners, w = _lattice(uvt, resolutions[lv])
        idx = (_hash_corners(corners, table_size) + lv * table_size).ravel()
        contrib = (w[:, :, None] * gout[:, None, lv * f : (lv + 1) * f]).reshape(-1, f)
        for c in range(f):
            buf[:, c] += np.bincount(idx, weights=contrib[:, c], minlength=table_shape[0])
    return buf


def composite_scan(sigma, delta, offsets):
    """Per-ray transmittance scan over ragged segments.

    Returns (weights, trans) flat arrays aligned with sigma.
    """
    sd = sigma * delta
    cs = np.cumsum(sd)
    pre = np.concatenate((np.zeros(1, dtype=sd.dtype), cs))
    counts = np.diff(offsets)
    base = np.repeat(pre[offsets[:-1]], counts)
    # exclusive prefix within each segment
    excl = cs - base - sd
    trans = np.exp(-excl)
    weights = trans * (1.0 - np.exp(-sd))
    return weights, trans


def march_occupancy(ou, du, near, far, step, occ_bytes, nx, ny, nz):
    """Fixed-step ray march keeping only samples inside occupied voxels.

    ou/du are in unit-cube coordinates (du = world_dir / box_extent); t stays
    in world units. The per-ray step is span/ceil(span/step), never coarser
    than the request, so the midpoint samples tile the chord exactly and a
    homogeneous medium composites to its analytic opacity. Returns
    (t_flat, delta_flat, offsets) with ray-major ordering.
    """
    n_rays = ou.shape[0]
    out_dtype = near.dtype
    # work in f64 like the compiled kernel so voxel classification agrees
    ou = ou.astype(np.float64, copy=False)
    du = du.astype(np.float64, copy=False)
    near = near.astype(np.float64, copy=False)
    far = far.astype(np.float64, copy=False)
    span = np.maximum(far - near, 0.0)
    nk = np.ceil(span / step).astype(np.int64)
    kmax = int(nk.max()) if n_rays else 0
    if kmax == 0:
        return (np.zeros(0, dtype=out_dtype), np.zeros(0, dtype=out_dtype),
                np.zeros(n_rays + 1, dtype=np.int64))
    dstep = np.where(nk > 0, span / np.maximum(nk, 1), 0.0)
    ks = np.arange(kmax, dtype=np.float64)
    t = near[:, None] + (ks[None, :] + 0.5) * dstep[:, None]  # [R,K]
    alive = ks[None, :] < nk[:, None]
    pos = ou[:, None, :] + t[:, :, None] * du[:, None, :]
    res = np.array([nx, ny, nz], dtype=np.int64)
    vox = np.floor(pos * res).astype(np.int64)
    inside = np.all((vox >= 0) & (vox < res), axis=2) & np.all(pos >= 0.0, axis=2)
    flat = vox[..., 0] + nx * (vox[..., 1] + ny * vox[..., 2])
    np.clip(flat, 0, nx * ny * nz - 1, out=flat)
    occ = (occ_bytes[flat >> 3] >> (flat & 7).astype(np.uint8)) & 1
    keep = alive & inside & (occ == 1)
    counts = keep.sum(axis=1)
    offsets = np.zeros(n_rays + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    delta = np.repeat(dstep, counts)
    return (t[keep].astype(out_dtype, copy=False),
            delta.astype(out_dtype, copy=False), offsets)
