"""Linear distance-weighted discrimination with the smooth DWD loss.

Objective on standardized features x:
    (1/n) sum_i V(y_i (w.x_i + b)) + lam ||w||^2,
    V(u) = 1 - u for u <= 1/2, 1 / (4u) otherwise,
minimized by full-batch gradient descent with Armijo backtracking.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.errors import DataError, ShapeMismatchError
from src.fields.ltf import load_tensor, save_tensor
from src.logger import logger
from src.manifest import read_toml, write_toml
from src.downstream.config import ClassifyConfig


def dwd_loss(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    safe = np.where(u > 0.5, u, 1.0)
    return np.where(u <= 0.5, 1.0 - u, 1.0 / (4.0 * safe))


def dwd_loss_derivative(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    safe = np.where(u > 0.5, u, 1.0)
    return np.where(u <= 0.5, -1.0, -1.0 / (4.0 * safe**2))


@dataclass(frozen=True)
class LinearDWDModel:
    weights: np.ndarray
    intercept: float
    lam: float
    mean: np.ndarray
    scale: np.ndarray
    converged: bool = True
    iterations: int = 0

    @property
    def num_features(self) -> int:
        return self.weights.shape[0]

    def standardize(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.num_features:
            raise ShapeMismatchError(f"expected (n, {self.num_features}) features, got {features.shape}")
        return (features - self.mean) / self.scale


def _signed_labels(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels).ravel()
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be 0 or 1")
    if len(np.unique(labels)) < 2:
        raise DataError("DWD needs at least one example of each class")
    return np.where(labels == 1, 1.0, -1.0)


def _objective(x: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, lam: float) -> Tuple[float, np.ndarray, float]:
    margins = y * (x @ w + b)
    n = len(y)
    value = float(np.mean(dwd_loss(margins)) + lam * np.dot(w, w))
    coeff = dwd_loss_derivative(margins) * y / n
    return value, x.T @ coeff + 2.0 * lam * w, float(np.sum(coeff))


def dwd_train(features: np.ndarray, labels: np.ndarray, config: Optional[ClassifyConfig] = None,
              lam: Optional[float] = None) -> LinearDWDModel:
    config = config if config is not None else ClassifyConfig()
    lam = config.lam if lam is None else lam
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != len(np.asarray(labels).ravel()):
        raise ShapeMismatchError(f"features {features.shape} do not match {len(np.asarray(labels).ravel())} labels")
    y = _signed_labels(labels)
    mean = features.mean(axis=0)
    scale = features.std(axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    x = (features - mean) / scale

    w, b = np.zeros(x.shape[1]), 0.0
    value, grad_w, grad_b = _objective(x, y, w, b, lam)
    step, converged, iteration = 1.0, False, 0
    for iteration in range(1, config.max_iter + 1):
        norm_sq = float(np.dot(grad_w, grad_w) + grad_b**2)
        if np.sqrt(norm_sq) < config.tol:
            converged = True
            break
        step *= 2.0
        while True:
            w_new, b_new = w - step * grad_w, b - step * grad_b
            new_value, new_grad_w, new_grad_b = _objective(x, y, w_new, b_new, lam)
            if new_value <= value - 0.5 * step * norm_sq or step < 1e-20:
                break
            step *= 0.5
        if new_value >= value:
            break
        w, b, value, grad_w, grad_b = w_new, b_new, new_value, new_grad_w, new_grad_b
    else:
        converged = float(np.sqrt(np.dot(grad_w, grad_w) + grad_b**2)) < config.tol
    if not converged:
        logger.warning("DWD gradient descent did not converge", iterations=iteration, max_iter=config.max_iter,
                       grad_norm=float(np.sqrt(np.dot(grad_w, grad_w) + grad_b**2)), tol=config.tol)
    return LinearDWDModel(w, float(b), float(lam), mean, scale, converged, iteration)


def dwd_predict(model: LinearDWDModel, features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(scores, labels); a score of exactly 0 is assigned to the positive class."""
    scores = model.standardize(features) @ model.weights + model.intercept
    return scores, (scores >= 0.0).astype(int)


def dwd_objective(model: LinearDWDModel, features: np.ndarray, labels: np.ndarray) -> float:
    return _objective(model.standardize(features), _signed_labels(labels), model.weights,
                      model.intercept, model.lam)[0]


def cross_validate_lambda(features: np.ndarray, labels: np.ndarray,
                          config: Optional[ClassifyConfig] = None) -> Tuple[float, pd.DataFrame]:
    """k-fold CV accuracy per lam; ties go to the earlier grid entry."""
    from src.downstream.scoring import accuracy

    config = config if config is not None else ClassifyConfig()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels).ravel()
    folds = np.array_split(np.random.default_rng(config.seed).permutation(len(labels)), config.folds)
    rows = []
    for lam in config.lambda_grid:
        scores = []
        for held in folds:
            train_mask = np.ones(len(labels), dtype=bool)
            train_mask[held] = False
            if len(held) == 0 or len(np.unique(labels[train_mask])) < 2:
                continue
            model = dwd_train(features[train_mask], labels[train_mask], config, lam=lam)
            scores.append(accuracy(dwd_predict(model, features[held])[1], labels[held]))
        rows.append({"lam": lam, "accuracy": float(np.mean(scores)) if scores else float("nan"), "folds": len(scores)})
    table = pd.DataFrame(rows)
    if table["accuracy"].isna().all():
        raise DataError("cross-validation found no fold with both classes in training")
    best = float(table.loc[table["accuracy"].idxmax(), "lam"])
    logger.info("Selected DWD regularization", lam=best)
    return best, table


def save_dwd(model: LinearDWDModel, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    save_tensor(directory / "dwd_weights.ltf", np.stack([model.weights, model.mean, model.scale]))
    write_toml(directory / "dwd.toml", {
        "intercept": model.intercept,
        "lam": model.lam,
        "converged": model.converged,
        "iterations": model.iterations,
        "num_features": model.num_features,
        "layout": "rows: weights, mean, scale",
    })
    return directory


def load_dwd(directory: Union[str, Path]) -> LinearDWDModel:
    directory = Path(directory)
    header = read_toml(directory / "dwd.toml")
    stacked = load_tensor(directory / "dwd_weights.ltf").array.astype(np.float64)
    if stacked.ndim != 2 or stacked.shape != (3, int(header["num_features"])):
        raise DataError(f"{directory / 'dwd_weights.ltf'}: shape {stacked.shape}, header says 3 x {header['num_features']}")
    return LinearDWDModel(stacked[0], float(header["intercept"]), float(header["lam"]), stacked[1], stacked[2],
                          bool(header["converged"]), int(header["iterations"]))
