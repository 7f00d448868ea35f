"""Per-frame binary occupancy volumes for empty-space skipping.

A voxel is occupied iff any of its 5x5x5 interior subgrid points has
activated density above tau1. Coordinates are unit-cube; callers normalize.
Serialization: little-endian 16-byte header (magic, version, Nx, Ny, Nz,
frame, tau1) followed by the bit payload packed x-fastest, LSB-first.
Resolutions ride in single bytes, so each axis tops out at 255.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .diff.dtypes import default_dtype

MAGIC = b"VVOC"
VERSION = 1
HEADER = struct.Struct("<4sB3BIf")
assert HEADER.size == 16


@dataclass
class OccupancyVolume:
    resolution: tuple  # (nx, ny, nz)
    bits: np.ndarray  # uint8, ceil(nx*ny*nz/8) bytes, x-fastest, LSB-first
    frame: int
    tau1: float

    def __post_init__(self):
        nx, ny, nz = self.resolution
        need = (nx * ny * nz + 7) // 8
        if self.bits.dtype != np.uint8 or len(self.bits) != need:
            raise ValueError(f"payload must be {need} uint8 bytes, got {len(self.bits)}")

    @property
    def n_bits(self):
        nx, ny, nz = self.resolution
        return nx * ny * nz

    def flags(self) -> np.ndarray:
        """Unpacked boolean grid [nz, ny, nx] (z-slowest to match packing)."""
        nx, ny, nz = self.resolution
        flat = np.unpackbits(self.bits, bitorder="little")[: self.n_bits]
        return flat.reshape(nz, ny, nx).astype(bool)

    def occupied_count(self) -> int:
        return int(np.unpackbits(self.bits, bitorder="little")[: self.n_bits].sum())


def _flat_index(ix, iy, iz, nx, ny):
    return ix + nx * (iy + ny * iz)


def query(vol: OccupancyVolume, p) -> bool:
    """True iff unit-cube point p falls in an occupied voxel; outside -> False."""
    return bool(query_many(vol, np.asarray(p, dtype=np.float64)[None, :])[0])


def query_many(vol: OccupancyVolume, pts: np.ndarray) -> np.ndarray:
    nx, ny, nz = vol.resolution
    res = np.array([nx, ny, nz])
    vox = np.floor(pts * res).astype(np.int64)
    inside = np.all((pts >= 0.0) & (vox >= 0) & (vox < res), axis=1)
    flat = _flat_index(vox[:, 0], vox[:, 1], vox[:, 2], nx, ny)
    flat = np.clip(flat, 0, nx * ny * nz - 1)
    bit = (vol.bits[flat >> 3] >> (flat & 7).astype(np.uint8)) & 1
    return inside & (bit == 1)


def _subgrid_points(resolution, subgrid):
    """Unit-cube coords of every voxel's interior subgrid, [nz,ny,nx,s^3,3]."""
    nx, ny, nz = resolution
    offs = (np.arange(subgrid) + 0.5) / subgrid
    oz, oy, ox = np.meshgrid(offs, offs, offs, indexing="ij")
    sub = np.stack([ox.ravel(), oy.ravel(), oz.ravel()], axis=1)  # [s^3, 3]
    iz, iy, ix = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    base = np.stack([ix, iy, iz], axis=-1).astype(np.float64)  # [nz,ny,nx,3]
    pts = (base[..., None, :] + sub) / np.array([nx, ny, nz], dtype=np.float64)
    return pts


def build(model, frame: int, tau1: float = 5.0, mset=None) -> OccupancyVolume:
    """Occupancy from the frame's decoded density field.

    Deterministic in (model, frame, tau1). Evaluation runs in z-slabs to
    bound memory: resolution * subgrid^3 points in total.
    """
    cfg = model.cfg
    resolution = tuple(cfg.occ_res)
    nx, ny, nz = resolution
    sub = cfg.occ_subgrid
    if mset is None:
        mset = model.decode_frame_cached(frame)
    t = model.time_of(frame)
    occupied = np.zeros((nz, ny, nx), dtype=bool)
    pts_all = _subgrid_points(resolution, sub)
    for z0 in range(nz):
        pts = pts_all[z0].reshape(-1, 3)
        sigma, _ = model.density(mset, pts.astype(default_dtype()), t)
        s = sigma.data.reshape(ny, nx, sub**3)
        occupied[z0] = np.any(s > tau1, axis=2)
    flat = occupied.reshape(-1)  # z-slowest => x-fastest flat order
    bits = np.packbits(flat, bitorder="little")
    need = (nx * ny * nz + 7) // 8
    if len(bits) < need:
        bits = np.pad(bits, (0, need - len(bits)))
    return OccupancyVolume(resolution=resolution, bits=bits, frame=frame, tau1=tau1)


def build_from_field(sigma_fn, resolution, frame: int, tau1: float, subgrid: int = 5) -> OccupancyVolume:
    """Same contract as build() but on an arbitrary sigma(pts)->[N] callable.

    Used by tests (analytic fields) and by anything that wants a volume
    without a full model.
    """
    nx, ny, nz = resolution
    pts_all = _subgrid_points(resolution, subgrid)
    occupied = np.zeros((nz, ny, nx), dtype=bool)
    for z0 in range(nz):
        pts = pts_all[z0].reshape(-1, 3)
        s = np.asarray(sigma_fn(pts)).reshape(ny, nx, subgrid**3)
        occupied[z0] = np.any(s > tau1, axis=2)
    bits = np.packbits(occupied.reshape(-1), bitorder="little")
    need = (nx * ny * nz + 7) // 8
    if len(bits) < need:
        bits = np.pad(bits, (0, need - len(bits)))
    return OccupancyVolume(resolution=tuple(resolution), bits=bits, frame=frame, tau1=tau1)


def serialize(vol: OccupancyVolume) -> bytes:
    nx, ny, nz = vol.resolution
    if max(nx, ny, nz) > 255:
        raise ValueError("occupancy resolution exceeds the u8 header field (max 255)")
    head = HEADER.pack(MAGIC, VERSION, nx, ny, nz, vol.frame, vol.tau1)
    return head + vol.bits.tobytes()


def deserialize(data: bytes) -> OccupancyVolume:
    if len(data) < HEADER.size:
        raise ValueError(f"occupancy stream truncated: {len(data)} < {HEADER.size} header bytes")
    magic, version, nx, ny, nz, frame, tau1 = HEADER.unpack(data[: HEADER.size])
    if magic != MAGIC:
        raise ValueError(f"bad occupancy magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported occupancy version {version}")
    need = (nx * ny * nz + 7) // 8
    payload = data[HEADER.size :]
    if len(payload) != need:
        raise ValueError(f"occupancy payload length {len(payload)}, expected {need}")
    bits = np.frombuffer(payload, dtype=np.uint8).copy()
    return OccupancyVolume(resolution=(nx, ny, nz), bits=bits, frame=frame, tau1=float(tau1))


def save(vol: OccupancyVolume, path):
    with open(path, "wb") as f:
        f.write(serialize(vol))


def load(path) -> OccupancyVolume:
    with open(path, "rb") as f:
        return deserialize(f.read())
