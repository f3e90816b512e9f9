"""Landmark influence from DWD coefficients.

Feature layout: [t0 landmark coords (N*dim)] [t1 landmark coords (N*dim)],
landmark i occupying ``i*dim .. i*dim+dim-1`` within each block.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.errors import ShapeMismatchError
from src.downstream.config import ClassifyConfig
from src.downstream.dwd import LinearDWDModel, dwd_predict, dwd_train
from src.downstream.scoring import accuracy, average_precision
from src.logger import logger


@dataclass(frozen=True)
class ImportanceRanking:
    order: np.ndarray
    importance: np.ndarray

    def top(self, k: int) -> np.ndarray:
        return self.order[:k]


def feature_columns(landmarks: Sequence[int], num_landmarks: int, dim: int, timepoints: int = 2) -> np.ndarray:
    landmarks = np.asarray(landmarks, dtype=int)
    return np.concatenate([
        t * num_landmarks * dim + (landmarks[:, None] * dim + np.arange(dim)).ravel()
        for t in range(timepoints)
    ]) if landmarks.size else np.zeros(0, dtype=int)


def landmark_importance(model: LinearDWDModel, num_landmarks: int, dim: int) -> ImportanceRanking:
    """Sum of |w| over each landmark's coordinate features at both timepoints, ranked descending."""
    if model.num_features != 2 * num_landmarks * dim:
        raise ShapeMismatchError(
            f"{model.num_features} DWD weights do not fit 2 x {num_landmarks} landmarks x {dim} coordinates"
        )
    per_feature = np.abs(model.weights).reshape(2, num_landmarks, dim)
    importance = per_feature.sum(axis=(0, 2))
    return ImportanceRanking(np.argsort(-importance, kind="stable"), importance)


def importance_histogram(ranking: ImportanceRanking, bins: int = 20) -> pd.DataFrame:
    counts, edges = np.histogram(ranking.importance, bins=bins)
    return pd.DataFrame({"weight_low": edges[:-1], "weight_high": edges[1:], "frequency": counts})


def topk_curve(train_features: np.ndarray, train_labels: np.ndarray, test_features: np.ndarray,
               test_labels: np.ndarray, ranking: ImportanceRanking, num_landmarks: int, dim: int,
               ks: Optional[Sequence[int]] = None, config: Optional[ClassifyConfig] = None) -> pd.DataFrame:
    """Retrain DWD on the k most influential landmarks for every k; AP and accuracy on the test set."""
    config = config if config is not None else ClassifyConfig()
    ks = sorted({min(int(k), num_landmarks) for k in (ks if ks is not None else config.topk_list)})
    rows = []
    for k in ks:
        columns = feature_columns(ranking.top(k), num_landmarks, dim)
        model = dwd_train(train_features[:, columns], train_labels, config)
        scores, predictions = dwd_predict(model, test_features[:, columns])
        rows.append({"k": k, "features": len(columns), "ap": average_precision(scores, test_labels),
                     "accuracy": accuracy(predictions, test_labels)})
        logger.debug("Top-k retrain", k=k, ap=rows[-1]["ap"])
    return pd.DataFrame(rows)
