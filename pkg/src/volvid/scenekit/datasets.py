"""Multi-view dataset manifest: cameras, per-frame image/mask references.

A dataset directory holds manifest.json plus the referenced PNGs. Cameras
are pinhole: 3x3 intrinsics K and 3x4 world-from-camera extrinsics [R|t],
row-major. Masks ride in the image alpha channel or parallel grayscale files.
"""

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..renderer import Camera, SceneBounds
from .imio import load_png

MANIFEST_NAME = "manifest.json"


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    root: str
    bounds: SceneBounds
    cameras: list  # of Camera
    camera_names: list
    n_frames: int
    images: list  # [frame][cam] -> relative path
    masks: Optional[list]  # same shape or None
    _img_cache: dict = field(default_factory=dict, repr=False)

    def time_of(self, frame: int) -> float:
        return frame / (self.n_frames - 1) if self.n_frames > 1 else 0.0

    @property
    def n_cams(self):
        return len(self.cameras)

    def image(self, frame: int, cam: int):
        key = (frame, cam)
        if key not in self._img_cache:
            rgb, alpha = load_png(os.path.join(self.root, self.images[frame][cam]))
            mask = alpha
            if self.masks is not None and self.masks[frame][cam]:
                m, _ = load_png(os.path.join(self.root, self.masks[frame][cam]))
                mask = m[:, :, 0]
            self._img_cache[key] = (rgb, mask)
        return self._img_cache[key]

    def pairs(self):
        return [(f, c) for f in range(self.n_frames) for c in range(self.n_cams)]


def _camera_from_record(rec: dict, name: str) -> Camera:
    k = np.asarray(rec["K"], dtype=np.float64)
    rt = np.asarray(rec["RT"], dtype=np.float64)
    if k.shape != (3, 3):
        raise DatasetError(f"camera {name}: K must be 3x3, got {k.shape}")
    if rt.shape != (3, 4):
        raise DatasetError(f"camera {name}: RT must be 3x4, got {rt.shape}")
    rot, trans = rt[:, :3], rt[:, 3]
    if np.abs(rot @ rot.T - np.eye(3)).max() > 1e-6:
        raise DatasetError(f"camera {name}: rotation not orthonormal")
    return Camera(
        fx=float(k[0, 0]), fy=float(k[1, 1]), cx=float(k[0, 2]), cy=float(k[1, 2]),
        rot=rot, trans=trans, width=int(rec["width"]), height=int(rec["height"]),
    )


def _camera_to_record(cam: Camera) -> dict:
    k = [[cam.fx, 0.0, cam.cx], [0.0, cam.fy, cam.cy], [0.0, 0.0, 1.0]]
    rt = np.concatenate([cam.rot, cam.trans[:, None]], axis=1)
    return {"K": k, "RT": rt.tolist(), "width": cam.width, "height": cam.height}


def load_dataset(root) -> Dataset:
    root = str(root)
    mpath = os.path.join(root, MANIFEST_NAME)
    if not os.path.exists(mpath):
        raise DatasetError(f"no {MANIFEST_NAME} under {root}")
    with open(mpath) as f:
        man = json.load(f)
    try:
        bounds = SceneBounds.from_dict(man["bounds"])
        n_frames = int(man["n_frames"])
        cam_recs = man["cameras"]
        frames = man["frames"]
    except (KeyError, ValueError) as e:
        raise DatasetError(f"manifest field error: {e}") from e
    if n_frames != len(frames):
        raise DatasetError(f"n_frames={n_frames} but {len(frames)} frame records")
    names = [rec.get("name", f"cam{k:02d}") for k, rec in enumerate(cam_recs)]
    cams = [_camera_from_record(rec, name) for rec, name in zip(cam_recs, names)]

    has_masks = bool(man.get("has_masks", False))
    images, masks = [], ([] if has_masks else None)
    for frec in frames:
        row, mrow = [], []
        for name, cam in zip(names, cams):
            try:
                rel = frec["images"][name]
            except KeyError:
                raise DatasetError(f"frame {frec.get('index')}: missing image for camera {name}")
            path = os.path.join(root, rel)
            if not os.path.exists(path):
                raise DatasetError(f"missing image file {rel}")
            row.append(rel)
            if has_masks:
                mrel = frec.get("masks", {}).get(name)
                if mrel is None:
                    # mask may live in the alpha channel; verify on first load
                    rgbm, alpha = load_png(path)
                    if alpha is None:
                        raise DatasetError(
                            f"masks declared but frame {frec.get('index')} camera {name} "
                            "has neither a mask file nor an alpha channel"
                        )
                else:
                    mp = os.path.join(root, mrel)
                    if not os.path.exists(mp):
                        raise DatasetError(f"missing mask file {mrel}")
                mrow.append(mrel)
        images.append(row)
        if has_masks:
            masks.append(mrow)

    ds = Dataset(
        root=root, bounds=bounds, cameras=cams, camera_names=names,
        n_frames=n_frames, images=images, masks=masks,
    )
    # resolution sanity on the first referenced image
    rgb, _ = ds.image(0, 0)
    if rgb.shape[:2] != (cams[0].height, cams[0].width):
        raise DatasetError(
            f"image {images[0][0]} is {rgb.shape[1]}x{rgb.shape[0]}, camera says "
            f"{cams[0].width}x{cams[0].height}"
        )
    return ds


def write_dataset(root, bounds: SceneBounds, cameras, camera_names, images, masks=None):
    """images: [frame][cam] relative paths. Returns the manifest path."""
    man = {
        "version": 1,
        "bounds": bounds.to_dict(),
        "n_frames": len(images),
        "has_masks": masks is not None,
        "cameras": [
            dict(name=n, **_camera_to_record(c)) for n, c in zip(camera_names, cameras)
        ],
        "frames": [
            {
                "index": f,
                "images": {n: images[f][k] for k, n in enumerate(camera_names)},
                **(
                    {"masks": {n: masks[f][k] for k, n in enumerate(camera_names) if masks[f][k]}}
                    if masks is not None
                    else {}
                ),
            }
            for f in range(len(images))
        ],
    }
    path = os.path.join(str(root), MANIFEST_NAME)
    with open(path, "w") as f:
        json.dump(man, f, indent=1, sort_keys=True)
    return path
