from .ckpt import Checkpoint, build_model, checkpoint_of, load_checkpoint, load_model, save_checkpoint
from .datasets import Dataset, DatasetError, load_dataset, write_dataset
from .imio import load_png, save_png
from .synth import (
    Primitive,
    SyntheticScene,
    default_scene,
    gen_synthetic,
    oracle_render,
    ring_cameras,
)

__all__ = [
    "Checkpoint",
    "Dataset",
    "DatasetError",
    "Primitive",
    "SyntheticScene",
    "build_model",
    "default_scene",
    "gen_synthetic",
    "load_checkpoint",
    "load_dataset",
    "load_model",
    "load_png",
    "oracle_render",
    "ring_cameras",
    "save_checkpoint",
    "checkpoint_of",
    "save_png",
    "write_dataset",
]
