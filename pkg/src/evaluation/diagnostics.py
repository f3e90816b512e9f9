"""Reconstruction diagnostics: how well landmark-driven fields stand in for the registration."""

from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from src.errors import DataError
from src.fields.ops import field_mse
from src.losses.config import LossConfig
from src.losses.reconstruction import recon_loss, reconstruct_transform, reconstruction_error
from src.model.proposal import LandmarkSet
from src.synth.cohort import Cohort
from src.synth.registration import RegistrationProvider

DIAGNOSTIC_COLUMNS = ["pair_id", "mse_nw", "mse_oracle", "field_mse"]


def reconstruction_diagnostics(cohort: Cohort, registration: RegistrationProvider,
                               landmarks: Mapping[str, LandmarkSet], pairs: Sequence,
                               config: LossConfig) -> pd.DataFrame:
    """Per pair (source a -> target c): warped MSE with the NW field vs the oracle field."""
    rows = []
    for pair in pairs:
        source, target = pair.a, pair.c
        if source not in landmarks or target not in landmarks:
            raise DataError(f"no landmarks for pair {source!r} -> {target!r}")
        source_image, target_image = cohort.image(source), cohort.image(target)
        reconstructed = reconstruct_transform(landmarks[source].points, landmarks[target].points,
                                              target_image.grid, config)
        oracle = registration.register(target, source)
        rows.append({
            "pair_id": f"{source}->{target}",
            "mse_nw": reconstruction_error(source_image, target_image, reconstructed),
            "mse_oracle": reconstruction_error(source_image, target_image, oracle),
            "field_mse": field_mse(reconstructed, oracle),
        })
    return pd.DataFrame(rows, columns=DIAGNOSTIC_COLUMNS)


def mean_recon_loss(cohort: Cohort, landmarks: Mapping[str, LandmarkSet], pairs: Sequence,
                    config: LossConfig) -> float:
    """Mean reconstruction loss over evaluation triplets: a and b rebuilt into anchor c."""
    values = []
    for pair in pairs:
        missing = [i for i in (pair.a, pair.b, pair.c) if i not in landmarks]
        if missing:
            raise DataError(f"no landmarks for {', '.join(missing)}")
        loss = recon_loss(cohort.image(pair.a), cohort.image(pair.b), cohort.image(pair.c),
                          landmarks[pair.a], landmarks[pair.b], landmarks[pair.c], config)
        values.append(float(loss.value))
    return float(np.mean(values)) if values else float("nan")
