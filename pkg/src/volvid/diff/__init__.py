from .dtypes import default_dtype, set_default_dtype, using_dtype
from .tensor import (
    Graph,
    GraphConsumedError,
    ShapeError,
    Tensor,
    as_tensor,
    backward,
)
from . import ops

__all__ = [
    "Graph",
    "GraphConsumedError",
    "ShapeError",
    "Tensor",
    "as_tensor",
    "backward",
    "default_dtype",
    "ops",
    "set_default_dtype",
    "using_dtype",
]
