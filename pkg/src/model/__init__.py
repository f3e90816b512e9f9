from .config import ModelConfig
from .proposal import (
    LandmarkSet,
    ProposalModel,
    init_model,
    extract_features,
    head_output,
    propose_points,
    propose,
)
from .checkpoint import save_checkpoint, load_checkpoint, parameter_hash

__all__ = [
    "ModelConfig",
    "LandmarkSet",
    "ProposalModel",
    "init_model",
    "extract_features",
    "head_output",
    "propose_points",
    "propose",
    "save_checkpoint",
    "load_checkpoint",
    "parameter_hash",
]
