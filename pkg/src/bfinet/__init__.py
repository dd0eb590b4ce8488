"""Cross networks and blockwise feature interaction (BFI) in plain numpy."""

from .linalg import ContractError, SeededRng
from .model import (
    VARIANTS,
    CostReport,
    Model,
    ModelConfig,
    build_model,
    flop_count,
    model_backward,
    model_forward,
    param_count,
)

__all__ = [
    "VARIANTS",
    "ContractError",
    "CostReport",
    "Model",
    "ModelConfig",
    "SeededRng",
    "build_model",
    "flop_count",
    "model_backward",
    "model_forward",
    "param_count",
]
__version__ = "0.1.0"
