from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class CohortConfig(BaseModel):
    """Synthetic cohort: template shape, per-subject deformations and progression."""

    model_config = ConfigDict(extra="forbid")

    num_subjects: int = Field(default=60, ge=1, description="Subjects in the cohort")
    num_train: int = Field(default=40, ge=0, description="Leading subjects used for training; the rest are held out")
    image_dims: Tuple[int, ...] = (96, 96)
    image_spacing: Tuple[float, ...] = (1.0, 1.0)

    # Template
    ring_radius: float = Field(default=24.0, gt=0.0, description="Ring radius r0 (mm)")
    ring_thickness: float = Field(default=3.0, gt=0.0, description="Std of the radial ring profile (mm)")
    blob_offsets: Optional[List[Tuple[float, ...]]] = Field(
        default=None, description="Blob centers relative to the ring center, in units of r0"
    )
    blob_radius: float = Field(default=3.0, gt=0.0, description="Std of each blob (mm)")
    blob_intensity: float = Field(default=0.8, ge=0.0)

    # Subject deformation
    svf_bumps: int = Field(default=6, ge=0, description="Gaussian velocity bumps per subject")
    svf_amplitude: float = Field(default=4.0, ge=0.0, description="Largest bump velocity (mm)")
    svf_width: float = Field(default=10.0, gt=0.0, description="Std of each bump (mm)")
    svf_steps: int = Field(default=6, ge=1)
    nuisance_amplitude: float = Field(default=0.5, ge=0.0, description="t0->t1 nuisance bump velocity (mm)")

    # Progression
    progression_mm: float = Field(default=3.0, ge=0.0, description="Ring thinning at the affected site (mm)")
    progression_threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    progression_window: float = Field(default=0.6, gt=0.0, description="Angular width of the affected site")

    noise_std: float = Field(default=0.0, ge=0.0, description="Additive Gaussian intensity noise")
    fold_threshold: float = Field(default=0.01, ge=0.0, description="Largest tolerated negative-Jacobian fraction")
    max_resamples: int = Field(default=20, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "CohortConfig":
        if len(self.image_dims) not in (2, 3):
            raise ValueError(f"image_dims must have 2 or 3 entries, got {self.image_dims}")
        if len(self.image_spacing) != len(self.image_dims):
            raise ValueError("image_spacing must match image_dims in length")
        if self.num_train > self.num_subjects:
            raise ValueError(f"num_train {self.num_train} exceeds num_subjects {self.num_subjects}")
        self.resolved_blob_offsets()
        return self

    @property
    def dim(self) -> int:
        return len(self.image_dims)

    def resolved_blob_offsets(self) -> List[Tuple[float, ...]]:
        if self.blob_offsets is not None:
            offsets = [tuple(float(c) for c in o) for o in self.blob_offsets]
        else:
            offsets = [(0.4, 0.35), (-0.4, 0.35), (0.0, -0.45)]
        padded = []
        for offset in offsets:
            if len(offset) > self.dim:
                raise ValueError(f"blob offset {offset} has more than {self.dim} components")
            padded.append(offset + (0.0,) * (self.dim - len(offset)))
        return padded
