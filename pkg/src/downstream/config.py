from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field


class ClassifyConfig(BaseModel):
    """Procrustes + linear DWD classification of landmark shapes."""

    model_config = ConfigDict(extra="forbid")

    lam: float = Field(default=1e-3, gt=0.0, description="DWD ridge constant")
    cross_validate: bool = Field(default=False, description="Pick lam by k-fold CV over lambda_grid")
    lambda_grid: List[float] = Field(default_factory=lambda: [1e-4, 1e-3, 1e-2, 1e-1, 1.0])
    folds: int = Field(default=5, ge=2)
    max_iter: int = Field(default=5000, ge=1)
    tol: float = Field(default=1e-6, gt=0.0, description="Gradient-norm stopping threshold")
    gpa_tol: float = Field(default=1e-8, gt=0.0)
    gpa_max_iter: int = Field(default=100, ge=1)
    top_k: Optional[int] = Field(default=None, ge=1, description="Retrain on the k most important landmarks")
    topk_list: List[int] = Field(default_factory=lambda: [1, 5, 10, 25, 50, 100])
    histogram_bins: int = Field(default=20, ge=1)
    seed: int = 0
