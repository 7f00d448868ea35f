from .service import (
    FrameNotFound,
    RenderRequest,
    RenderService,
    RequestError,
    make_server,
    run_server,
)
from .cli import main

__all__ = [
    "FrameNotFound",
    "RenderRequest",
    "RenderService",
    "RequestError",
    "make_server",
    "run_server",
    "main",
]
