from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class LossConfig(BaseModel):
    """Kernel bandwidth and loss weights (defaults are the published constants)."""

    model_config = ConfigDict(extra="forbid")

    sigma: float = Field(default=3.0, gt=0.0, description="Nadaraya-Watson kernel bandwidth, mm")
    lambda_d: float = Field(default=0.005, ge=0.0, description="weight of the landmark discovery loss")
    lambda_recon: float = Field(default=0.05, ge=0.0, description="weight of the reconstruction loss")
    nw_epsilon: float = Field(default=1e-12, gt=0.0, description="floor of the NW denominator")
    discovery: Literal["triplet", "pairwise"] = Field(
        default="triplet", description="triplet objective or the one-directional pairwise ablation"
    )
