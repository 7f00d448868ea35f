"""Volumetric video with per-frame radiance fields stored as MLP maps.

Each frame is a set of tiny MLPs whose parameters live in 2D grids decoded
by a shared convolutional network from a per-frame latent code. Rendering
marches rays through a baked occupancy volume and composites densities and
colors with the standard over operator.
"""

from .config import ModelConfig, NAMED_CONFIGS
from .model import VolvidModel
from .renderer import Camera, RenderOptions, SceneBounds, render_image, psnr
from .backend import available_backends, backend_name, set_backend

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "NAMED_CONFIGS",
    "VolvidModel",
    "Camera",
    "RenderOptions",
    "SceneBounds",
    "render_image",
    "psnr",
    "available_backends",
    "backend_name",
    "set_backend",
    "__version__",
]
