import numpy as np

from src.errors import DataError, ShapeMismatchError


def _binary(labels) -> np.ndarray:
    labels = np.asarray(labels).ravel()
    if labels.size == 0:
        raise DataError("scoring needs at least one example")
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be 0 or 1")
    return labels.astype(int)


def average_precision(scores, labels) -> float:
    """Mean precision at the rank of each positive, descending score, stable ties."""
    labels = _binary(labels)
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.shape != labels.shape:
        raise ShapeMismatchError(f"{scores.size} scores for {labels.size} labels")
    if labels.sum() == 0:
        raise DataError("average precision is undefined without positives")
    ranked = labels[np.argsort(-scores, kind="stable")]
    hits = np.cumsum(ranked)
    ranks = np.arange(1, len(ranked) + 1)
    return float(np.mean((hits / ranks)[ranked == 1]))


def accuracy(predictions, labels) -> float:
    labels = _binary(labels)
    predictions = np.asarray(predictions).ravel()
    if predictions.shape != labels.shape:
        raise ShapeMismatchError(f"{predictions.size} predictions for {labels.size} labels")
    return float(np.mean(predictions == labels))
