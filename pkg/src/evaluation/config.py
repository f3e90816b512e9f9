from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    num_pairs: int = Field(default=40, ge=1, description="Evaluated image pairs")
    seed: int = Field(default=1234, description="Fixed seed for pair and anchor draws")
    subjects: Literal["test", "train", "all"] = "test"
    overlays: int = Field(default=4, ge=0, description="Overlay PNGs written per run")
