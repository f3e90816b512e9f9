"""Triplet training loop for the proposal network.

Each triplet is differentiated on its own tape; per-triplet gradients are
averaged in batch order before one optimizer update, so results do not
depend on how worker threads are scheduled.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.autodiff import Tape, backward
from src.config import settings
from src.errors import DataError, NumericError, ShapeMismatchError
from src.evaluation.consistency import chamfer_consistency, ordered_consistency
from src.logger import logger
from src.losses.config import LossConfig
from src.losses.discovery import out_of_domain_fraction
from src.losses.total import LOG_COLUMNS, LossRecord, triplet_loss
from src.model.checkpoint import save_checkpoint
from src.model.config import ModelConfig
from src.model.proposal import ProposalModel, init_model, propose, propose_points
from src.synth.cohort import Cohort
from src.synth.registration import OracleRegistration, RegistrationCache, RegistrationProvider
from src.training.config import TrainConfig
from src.training.log import TrainLog
from src.training.optimizers import make_optimizer
from src.training.sampler import Triplet, TripletData, fixed_triplets, load_triplet, sample_triplet


@dataclass(frozen=True)
class TripletResult:
    record: LossRecord
    grads: Dict[str, np.ndarray]
    out_of_domain: float


def lr_at(epoch: int, config: TrainConfig) -> float:
    """lr * (1 - decay)^epoch"""
    return config.learning_rate * (1.0 - config.lr_decay) ** epoch


def dump_landmarks(path: Union[str, Path], data: TripletData, points: Sequence[np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **{f"landmarks_{role}": p for role, p in zip("abc", points)},
             image_ids=np.array(data.triplet.ids))
    return path


def triplet_gradients(model: ProposalModel, data: TripletData, loss: LossConfig,
                      dump_dir: Optional[Path] = None) -> TripletResult:
    tape = Tape()
    params = model.leaves(tape, dtype=np.dtype(settings.dtype))
    points = [propose_points(model, image, tape, params) for image in data.images]
    breakdown = triplet_loss(*data.images, *points, data.phi_ca, data.phi_cb, loss)
    if not np.isfinite(breakdown.total.value):
        values = [p.value for p in points]
        where = ""
        if dump_dir is not None:
            where = f"; landmarks dumped to {dump_landmarks(dump_dir / 'nonfinite_landmarks.npz', data, values)}"
        ranges = ", ".join(f"{r}: [{np.nanmin(v):.3g}, {np.nanmax(v):.3g}]" for r, v in zip("abc", values))
        raise NumericError(f"non-finite loss on triplet {data.triplet.ids} (landmark ranges {ranges}){where}")
    grads = backward(breakdown.total).by_name()
    ood = 0.5 * (out_of_domain_fraction(points[0], data.phi_ca) + out_of_domain_fraction(points[1], data.phi_cb))
    return TripletResult(breakdown.record(), {k: np.asarray(v, dtype=np.float64) for k, v in grads.items()}, ood)


def _average(results: List[TripletResult]) -> Tuple[Dict[str, float], Dict[str, np.ndarray], float]:
    n = len(results)
    losses = {c: sum(getattr(r.record, c) for r in results) / n for c in LOG_COLUMNS}
    grads = {name: sum(r.grads[name] for r in results) / n for name in results[0].grads}
    return losses, grads, sum(r.out_of_domain for r in results) / n


def train_step(model: ProposalModel, batch: Union[TripletData, Sequence[TripletData]], config: TrainConfig,
               loss: LossConfig, optimizer=None, lr: Optional[float] = None,
               pool: Optional[ThreadPoolExecutor] = None,
               dump_dir: Optional[Path] = None) -> Tuple[Dict[str, float], ProposalModel]:
    """Forward, backward and one update over a batch of triplets.

    Returns the batch-mean loss row (plus grad_norm and out_of_domain) and
    the updated model.
    """
    batch = [batch] if isinstance(batch, TripletData) else list(batch)
    if not batch:
        raise DataError("train_step needs at least one triplet")
    optimizer = optimizer if optimizer is not None else make_optimizer(config)
    lr = config.learning_rate if lr is None else lr

    def run(data: TripletData) -> TripletResult:
        return triplet_gradients(model, data, loss, dump_dir)

    results = list(pool.map(run, batch)) if pool is not None else [run(d) for d in batch]
    losses, grads, ood = _average(results)
    grad_norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    updated = model.with_params(optimizer.step(model.params, grads, lr))
    return {**losses, "grad_norm": grad_norm, "out_of_domain": ood}, updated


def default_registration(cohort: Cohort) -> RegistrationProvider:
    oracle = OracleRegistration(cohort)
    if not settings.registration_cache:
        return oracle
    directory = None
    if settings.cache_dir:
        directory = Path(settings.cache_dir) / f"registration_{cohort.payload_hash()[:16]}"
    return RegistrationCache(oracle, directory)


def validate(model: ProposalModel, cohort: Cohort, registration: RegistrationProvider,
             triplets: Sequence[Triplet]) -> Dict[str, float]:
    """Mean ordered and chamfer consistency of a and b in c's frame."""
    ordered, chamfer = [], []
    for t in triplets:
        p_a, p_b = propose(model, cohort.image(t.a), t.a), propose(model, cohort.image(t.b), t.b)
        phi_ca, phi_cb = registration.to_anchor(t.a, t.c), registration.to_anchor(t.b, t.c)
        ordered.append(ordered_consistency(p_a, p_b, phi_ca, phi_cb).total)
        chamfer.append(chamfer_consistency(p_a, p_b, phi_ca, phi_cb))
    if not triplets:
        return {"val_ordered_total": float("nan"), "val_chamfer": float("nan")}
    return {"val_ordered_total": float(np.mean(ordered)), "val_chamfer": float(np.mean(chamfer))}


def train(cohort: Cohort, config: TrainConfig, loss: Optional[LossConfig] = None,
          model_config: Optional[ModelConfig] = None, registration: Optional[RegistrationProvider] = None,
          out_dir: Optional[Union[str, Path]] = None,
          model: Optional[ProposalModel] = None) -> Tuple[ProposalModel, TrainLog]:
    """Train on the cohort's training images; checkpoints go to ``out_dir/ckpt/epoch_<e>``."""
    loss = loss if loss is not None else LossConfig()
    if model is None:
        model_config = model_config if model_config is not None else ModelConfig(
            image_dims=cohort.config.image_dims, image_spacing=cohort.config.image_spacing,
            image_origin=cohort.grid.origin,
        )
        model = init_model(model_config, seed=config.seed)
    if not model.image_grid.same_as(cohort.grid):
        raise ShapeMismatchError(
            f"model image grid {model.image_grid.dims}/{model.image_grid.spacing} "
            f"does not match cohort grid {cohort.grid.dims}/{cohort.grid.spacing}"
        )
    registration = registration if registration is not None else default_registration(cohort)
    images = cohort.image_ids(cohort.train_subjects)
    if len(images) < 3:
        raise DataError(f"training needs at least 3 images, cohort has {len(images)} training images")
    held_out = cohort.image_ids(cohort.test_subjects)
    val_triplets = fixed_triplets(held_out if len(held_out) >= 3 else images, config.validation_triplets, config.seed)

    out_dir = Path(out_dir) if out_dir is not None else None
    ckpt_dir = out_dir / "ckpt" if out_dir is not None else None
    if ckpt_dir is not None and config.checkpoint:
        save_checkpoint(model, ckpt_dir / "epoch_0", epoch=0, seed=config.seed)

    rng = np.random.default_rng(config.seed)
    optimizer = make_optimizer(config)
    per_epoch = config.triplets_per_epoch or len(images)
    steps_per_epoch = math.ceil(per_epoch / config.batch_size)
    log = TrainLog()
    start = time.perf_counter()
    step = 0
    logger.info("Starting training", epochs=config.epochs, images=len(images), steps_per_epoch=steps_per_epoch,
                batch_size=config.batch_size, optimizer=config.optimizer, landmarks=model.num_landmarks)

    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        for epoch in range(config.epochs):
            lr = lr_at(epoch, config)
            for _ in range(steps_per_epoch):
                batch = [load_triplet(cohort, registration, sample_triplet(images, rng))
                         for _ in range(config.batch_size)]
                row, model = train_step(model, batch, config, loss, optimizer, lr, pool, out_dir)
                log.add_step({"step": step, "epoch": epoch, "lr": lr, **row})
                if row["out_of_domain"] > 0.1:
                    logger.warning("Landmarks leaving the image domain", step=step,
                                   fraction=round(row["out_of_domain"], 3))
                step += 1
            metrics = validate(model, cohort, registration, val_triplets)
            log.validation.append({"epoch": epoch, "lr": lr, **metrics})
            last = log.rows[-1]
            logger.info("Epoch finished", epoch=epoch, lr=lr, total=round(last["total"], 6),
                        l_d=round(last["l_d_total"], 4), l_recon=round(last["l_recon"], 6),
                        val_ordered=round(metrics["val_ordered_total"], 4))
            if ckpt_dir is not None and config.checkpoint:
                save_checkpoint(model, ckpt_dir / f"epoch_{epoch + 1}", epoch=epoch + 1, seed=config.seed)

    log.wall_clock = time.perf_counter() - start
    if out_dir is not None:
        log.write(out_dir)
    logger.info("Training finished", steps=step, seconds=round(log.wall_clock, 2))
    return model, log
