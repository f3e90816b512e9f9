"""Landmark spread under discovery-only and full training.

The discovery terms alone are minimised by collapsing all landmarks onto one
point; the reconstruction term holds them apart. Both variants run from the
same initial model over the same triplet sequence, and the mean pairwise
landmark distance is recorded after every update.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.config import settings
from src.errors import DataError
from src.logger import logger
from src.losses.config import LossConfig
from src.losses.discovery import landmark_spread
from src.model.proposal import ProposalModel, propose
from src.synth.cohort import Cohort
from src.synth.registration import RegistrationProvider
from src.training.config import TrainConfig
from src.training.optimizers import make_optimizer
from src.training.sampler import load_triplet, sample_triplet
from src.training.trainer import default_registration, train_step

SPREAD_COLUMNS = ["step", "spread", "total", "l_d_total", "l_recon"]


def mean_spread(model: ProposalModel, cohort: Cohort, image_ids: Sequence[str]) -> float:
    return float(np.mean([landmark_spread(propose(model, cohort.image(i), i).points) for i in image_ids]))


def spread_trace(cohort: Cohort, config: TrainConfig, loss: LossConfig, model: ProposalModel, steps: int,
                 registration: Optional[RegistrationProvider] = None, monitored: int = 8) -> pd.DataFrame:
    """Spread of the first ``monitored`` training images before and after each of ``steps`` updates.

    Triplets are drawn from ``config.seed`` at the fixed rate ``config.learning_rate``.
    """
    if steps < 0:
        raise DataError(f"steps must be >= 0, got {steps}")
    registration = registration if registration is not None else default_registration(cohort)
    images = cohort.image_ids(cohort.train_subjects)
    if len(images) < 3:
        raise DataError(f"spread runs need at least 3 training images, cohort has {len(images)}")
    watched = images[:monitored]
    rng = np.random.default_rng(config.seed)
    optimizer = make_optimizer(config)
    rows = [{"step": 0, "spread": mean_spread(model, cohort, watched),
             "total": np.nan, "l_d_total": np.nan, "l_recon": np.nan}]
    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        for step in range(1, steps + 1):
            batch = [load_triplet(cohort, registration, sample_triplet(images, rng))
                     for _ in range(config.batch_size)]
            row, model = train_step(model, batch, config, loss, optimizer, config.learning_rate, pool)
            rows.append({"step": step, "spread": mean_spread(model, cohort, watched),
                         **{c: row[c] for c in SPREAD_COLUMNS[2:]}})
    return pd.DataFrame(rows, columns=SPREAD_COLUMNS)


def _reduction(trace: pd.DataFrame) -> float:
    initial, final = trace["spread"].iloc[0], trace["spread"].iloc[-1]
    return float(1.0 - final / initial) if initial > 0 else 0.0


def degeneracy_report(cohort: Cohort, config: TrainConfig, loss: LossConfig, model: ProposalModel, steps: int = 200,
                      registration: Optional[RegistrationProvider] = None,
                      monitored: int = 8) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """Spread traces with ``lambda_recon = 0`` and with the configured loss.

    Returns the per-step frame (columns suffixed ``_discovery_only`` and
    ``_full``) and a summary with the fractional spread reduction of each run.
    """
    registration = registration if registration is not None else default_registration(cohort)
    discovery_only = spread_trace(cohort, config, loss.model_copy(update={"lambda_recon": 0.0}), model, steps,
                                  registration, monitored)
    full = spread_trace(cohort, config, loss, model, steps, registration, monitored)
    frame = discovery_only.merge(full, on="step", suffixes=("_discovery_only", "_full"))
    summary = {
        "steps": steps,
        "spread_initial": float(full["spread"].iloc[0]),
        "spread_discovery_only": float(discovery_only["spread"].iloc[-1]),
        "spread_full": float(full["spread"].iloc[-1]),
        "reduction_discovery_only": _reduction(discovery_only),
        "reduction_full": _reduction(full),
    }
    logger.info("Spread runs finished", **{k: round(v, 4) if isinstance(v, float) else v for k, v in summary.items()})
    return frame, summary
