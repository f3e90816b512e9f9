"""Command implementations shared by the CLI and the experiment graph.

Every command writes ``config.toml`` and ``run.manifest`` (resolved config,
seeds, input hashes, artifact hashes) into its output directory and returns
a summary dict.
"""

from pathlib import Path
from typing import Any, Dict, Optional, Union

import pandas as pd

from src.config import settings
from src.cli.run_config import RunConfig
from src.downstream import (
    classify_shapes,
    importance_histogram,
    landmark_shapes,
    save_dwd,
    topk_curve,
    with_labels,
)
from src.errors import ConfigError, DataError, ShapeMismatchError
from src.evaluation import (
    consistency_report,
    evaluation_pairs,
    ground_truth_landmarks,
    mean_recon_loss,
    reconstruction_diagnostics,
    render_overlay,
    saliency,
)
from src.fields.ltf import load_image, save_image
from src.logger import logger
from src.manifest import file_sha256, tree_hashes, write_toml
from src.model import ProposalModel, init_model, load_checkpoint, parameter_hash, propose
from src.synth import Cohort, generate_cohort, load_cohort, write_cohort
from src.training import default_registration, degeneracy_report, train

PathLike = Union[str, Path]


def prepare_out(out: PathLike, force: bool = False) -> Path:
    out = Path(out)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} exists and is not a directory")
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_run_manifest(out: Path, command: str, config: RunConfig, inputs: Dict[str, str],
                       results: Optional[Dict[str, Any]] = None) -> Path:
    (out / "config.toml").write_text(config.to_toml(), encoding="utf-8")
    scalars = {k: v for k, v in (results or {}).items() if isinstance(v, (int, float, str, bool))}
    document = {
        "command": command,
        "seed": config.seed,
        "run": {"threads": settings.threads, "dtype": settings.dtype},
        **config.model_dump(),
        "inputs": inputs,
        "results": scalars,
        "artifacts": tree_hashes(out),
    }
    return write_toml(out / "run.manifest", document)


def _cohort_inputs(directory: Path, cohort: Cohort) -> Dict[str, str]:
    return {"cohort_manifest": file_sha256(directory / "cohort.toml"), "cohort_payload": cohort.payload_hash()}


def _initial_model(cohort: Cohort, config: RunConfig) -> ProposalModel:
    return init_model(config.model_for(cohort.config.image_dims, cohort.config.image_spacing, cohort.grid.origin),
                      seed=config.train.seed)


def _model_for(cohort: Cohort, config: RunConfig, checkpoint: Optional[PathLike]) -> ProposalModel:
    if checkpoint is not None:
        model = load_checkpoint(checkpoint)
        if not model.image_grid.same_as(cohort.grid):
            raise ShapeMismatchError(
                f"checkpoint {checkpoint} expects {model.image_grid.dims} images, cohort has {cohort.grid.dims}"
            )
        return model
    logger.info("No checkpoint given; using the zero-initialized model (landmarks on grid points)")
    return _initial_model(cohort, config)


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator > 0 else float("nan")


def cmd_synthesize(config: RunConfig, out: PathLike, force: bool = False) -> Dict[str, Any]:
    out = prepare_out(out, force)
    cohort = generate_cohort(config.cohort)
    write_cohort(cohort, out, force=True)
    result = {"subjects": len(cohort.subjects), "positives": int(sum(s.label for s in cohort.subjects)),
              "payload_hash": cohort.payload_hash(), "out": str(out)}
    write_run_manifest(out, "synthesize", config, {}, result)
    return result


def cmd_train(config: RunConfig, cohort_dir: PathLike, out: PathLike, force: bool = False) -> Dict[str, Any]:
    cohort_dir = Path(cohort_dir)
    cohort = load_cohort(cohort_dir)
    out = prepare_out(out, force)
    model_config = config.model_for(cohort.config.image_dims, cohort.config.image_spacing, cohort.grid.origin)
    model, log = train(cohort, config.train, config.loss, model_config, out_dir=out)
    last = log.rows[-1] if log.rows else {}
    result = {
        "epochs": config.train.epochs,
        "steps": len(log.rows),
        "final_total": float(last.get("total", float("nan"))),
        "parameter_hash": parameter_hash(model),
        "checkpoint": str(out / "ckpt" / f"epoch_{config.train.epochs}") if config.train.checkpoint else "",
        "seconds": log.wall_clock,
        "out": str(out),
    }
    write_run_manifest(out, "train", config, _cohort_inputs(cohort_dir, cohort), result)
    return result


def cmd_eval(config: RunConfig, cohort_dir: PathLike, out: PathLike, checkpoint: Optional[PathLike] = None,
             ground_truth: bool = False, force: bool = False) -> Dict[str, Any]:
    cohort_dir = Path(cohort_dir)
    cohort = load_cohort(cohort_dir)
    out = prepare_out(out, force)
    registration = default_registration(cohort)
    pairs = evaluation_pairs(cohort, config.eval)
    needed = sorted({i for p in pairs for i in (p.a, p.b, p.c)})
    inputs = _cohort_inputs(cohort_dir, cohort)
    if ground_truth:
        truth = ground_truth_landmarks(cohort)
        landmarks = {i: truth[i] for i in needed}
    else:
        model = _model_for(cohort, config, checkpoint)
        inputs["parameter_hash"] = parameter_hash(model)
        landmarks = {i: propose(model, cohort.image(i), i) for i in needed}

    report = consistency_report(pairs, landmarks, registration)
    report.to_csv(out / "metrics.csv")
    report.summary_frame().to_csv(out / "metrics_summary.csv", index=False)
    diagnostics = reconstruction_diagnostics(cohort, registration, landmarks, pairs, config.loss)
    diagnostics.to_csv(out / "diagnostics.csv", index=False)
    for pair in pairs[: config.eval.overlays]:
        render_overlay(cohort.image(pair.a), landmarks[pair.a], (), out / "overlays" / f"{pair.a}.png")

    mse_nw, mse_oracle = float(diagnostics["mse_nw"].mean()), float(diagnostics["mse_oracle"].mean())
    result = {
        "pairs": len(pairs),
        "chamfer": report.chamfer_mm,
        "ordered_total": report.ordered_total_mm,
        "mse_nw": mse_nw,
        "mse_oracle": mse_oracle,
        "mse_ratio": _ratio(mse_nw, mse_oracle),
        "l_recon": mean_recon_loss(cohort, landmarks, pairs, config.loss),
        "out": str(out),
    }
    if not ground_truth:
        initial = _initial_model(cohort, config)
        initial_landmarks = {i: propose(initial, cohort.image(i), i) for i in needed}
        result["l_recon_initial"] = mean_recon_loss(cohort, initial_landmarks, pairs, config.loss)
        result["recon_ratio"] = _ratio(result["l_recon"], result["l_recon_initial"])
    logger.info("Evaluation finished", chamfer=round(result["chamfer"], 4), ordered=round(result["ordered_total"], 4),
                l_recon=result["l_recon"], recon_ratio=result.get("recon_ratio"))
    write_run_manifest(out, "eval", config, inputs, result)
    return result


def read_label_table(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing labels file: {path}")
    frame = pd.read_csv(path, dtype={"subject_id": str})
    if not {"subject_id", "label"} <= set(frame.columns):
        raise DataError(f"{path}: needs subject_id and label columns")
    return frame


def cmd_classify(config: RunConfig, cohort_dir: PathLike, out: PathLike, checkpoint: Optional[PathLike] = None,
                 labels: Optional[PathLike] = None, ground_truth: bool = False, curve: bool = False,
                 force: bool = False) -> Dict[str, Any]:
    cohort_dir = Path(cohort_dir)
    cohort = load_cohort(cohort_dir)
    out = prepare_out(out, force)
    inputs = _cohort_inputs(cohort_dir, cohort)
    model = None
    if not ground_truth:
        model = _model_for(cohort, config, checkpoint)
        inputs["parameter_hash"] = parameter_hash(model)
    train_split = landmark_shapes(cohort, cohort.train_subjects, model)
    test_split = landmark_shapes(cohort, cohort.test_subjects, model)
    if labels is not None:
        table = read_label_table(labels)
        train_split, test_split = with_labels(train_split, table), with_labels(test_split, table)
        inputs["labels"] = file_sha256(labels)

    result = classify_shapes(train_split, test_split, config.classify)
    result.report_frame().to_csv(out / "classification.csv", index=False)
    pd.DataFrame([result.summary()]).to_csv(out / "classification_summary.csv", index=False)
    result.importance_frame().to_csv(out / "importance.csv", index=False)
    importance_histogram(result.ranking, config.classify.histogram_bins).to_csv(
        out / "importance_histogram.csv", index=False
    )
    save_dwd(result.model, out / "dwd")
    if result.cv_table is not None:
        result.cv_table.to_csv(out / "cross_validation.csv", index=False)
    if curve:
        num_landmarks = len(result.ranking.order)
        dim = result.train_features.shape[1] // (2 * num_landmarks)
        topk_curve(result.train_features, train_split.labels, result.test_features, test_split.labels,
                   result.ranking, num_landmarks, dim, config=config.classify).to_csv(out / "topk.csv", index=False)

    summary = {**result.summary(), "out": str(out)}
    write_run_manifest(out, "classify", config, inputs, summary)
    return summary


def cmd_saliency(config: RunConfig, checkpoint: PathLike, image: PathLike, index: int, out: PathLike,
                 force: bool = False) -> Dict[str, Any]:
    model = load_checkpoint(checkpoint)
    picture = load_image(image)
    out = prepare_out(out, force)
    heat = saliency(model, picture, index)
    save_image(out / "saliency.ltf", heat)
    landmarks = propose(model, picture)
    render_overlay(picture, landmarks, (index,), out / "saliency.png", saliency=heat)
    result = {"index": index, "max": float(heat.values.max()), "out": str(out)}
    write_run_manifest(out, "saliency", config, {"image": file_sha256(image), "parameter_hash": parameter_hash(model)},
                       result)
    return result


def cmd_degeneracy(config: RunConfig, cohort_dir: PathLike, out: PathLike, steps: int = 200,
                   force: bool = False) -> Dict[str, Any]:
    """Landmark spread with and without the reconstruction term, from the zero-initialized model."""
    cohort_dir = Path(cohort_dir)
    cohort = load_cohort(cohort_dir)
    out = prepare_out(out, force)
    frame, summary = degeneracy_report(cohort, config.train, config.loss, _initial_model(cohort, config), steps)
    frame.to_csv(out / "spread.csv", index=False)
    result = {**summary, "out": str(out)}
    write_run_manifest(out, "degeneracy", config, _cohort_inputs(cohort_dir, cohort), result)
    return result
