from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field


class ModelConfig(BaseModel):
    """Proposal network shape; the default is the 2D desk configuration."""

    model_config = ConfigDict(extra="forbid")

    image_dims: Tuple[int, ...] = (96, 96)
    image_spacing: Tuple[float, ...] = (1.0, 1.0)
    image_origin: Tuple[float, ...] = (0.0, 0.0)
    grid_dims: Tuple[int, ...] = (12, 12)
    channels: int = Field(default=32, ge=1, description="feature channels c")
    hidden_channels: int = Field(default=16, ge=1, description="width of the intermediate conv blocks")
    head_hidden: int = Field(default=32, ge=1, description="hidden width of the shared head MLP")
    head_output_scale: float = Field(default=1.0, gt=0.0, description="mm per unit of head output")
    bound_displacement: Optional[float] = Field(
        default=None, gt=0.0, description="bound head displacements to k * delta with tanh saturation"
    )
