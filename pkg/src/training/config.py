from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class TrainConfig(BaseModel):
    """Optimization schedule; defaults follow the reference training protocol."""

    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=35, ge=0)
    batch_size: int = Field(default=4, ge=1, description="Triplets per update")
    learning_rate: float = Field(default=1e-3, ge=0.0)
    lr_decay: float = Field(default=0.01, ge=0.0, lt=1.0, description="Fractional decrease after each epoch")
    optimizer: Literal["adam", "sgd"] = "adam"
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    triplets_per_epoch: Optional[int] = Field(
        default=None, ge=1, description="Defaults to the number of training images"
    )
    validation_triplets: int = Field(default=8, ge=0)
    checkpoint: bool = True
    seed: int = 0
