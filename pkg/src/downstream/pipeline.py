"""Landmarks -> Procrustes-aligned features -> DWD -> scores and landmark ranking."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.errors import DataError
from src.downstream.config import ClassifyConfig
from src.downstream.dwd import LinearDWDModel, cross_validate_lambda, dwd_objective, dwd_predict, dwd_train
from src.downstream.importance import ImportanceRanking, feature_columns, landmark_importance
from src.downstream.procrustes import align_to_mean, gpa
from src.downstream.scoring import accuracy, average_precision
from src.logger import logger
from src.model.proposal import ProposalModel, propose
from src.synth.cohort import Cohort, Subject, image_id


@dataclass
class ShapeSplit:
    subject_ids: List[str]
    t0: List[np.ndarray]
    t1: List[np.ndarray]
    labels: np.ndarray

    def __post_init__(self):
        if not (len(self.subject_ids) == len(self.t0) == len(self.t1) == len(self.labels)):
            raise DataError("subject ids, shapes and labels differ in length")


def landmark_shapes(cohort: Cohort, subjects: Sequence[Subject], model: Optional[ProposalModel] = None) -> ShapeSplit:
    """Per-subject t0/t1 landmark sets: proposed by ``model``, or ground truth when None."""
    t0, t1 = [], []
    for s in subjects:
        for timepoint, bucket in ((0, t0), (1, t1)):
            if model is None:
                bucket.append(s.landmarks(timepoint).points)
            else:
                bucket.append(propose(model, s.image(timepoint), image_id(s.subject_id, timepoint)).points)
    return ShapeSplit([s.subject_id for s in subjects], t0, t1, np.array([s.label for s in subjects]))


def with_labels(split: ShapeSplit, labels: pd.DataFrame) -> ShapeSplit:
    """Replace labels by those of a labels table (subject_id, label)."""
    table = dict(zip(labels["subject_id"].astype(str), labels["label"].astype(int)))
    missing = [s for s in split.subject_ids if s not in table]
    if missing:
        raise DataError(f"labels missing for subjects {missing[:5]}")
    return ShapeSplit(split.subject_ids, split.t0, split.t1, np.array([table[s] for s in split.subject_ids]))


def shape_features(aligned_t0: np.ndarray, aligned_t1: np.ndarray) -> np.ndarray:
    """Concatenate aligned t0 and t1 coordinates: (subjects, 2 * N * dim)."""
    n = aligned_t0.shape[0]
    return np.concatenate([aligned_t0.reshape(n, -1), aligned_t1.reshape(n, -1)], axis=1)


@dataclass
class ClassificationResult:
    model: LinearDWDModel
    ranking: ImportanceRanking
    landmarks: np.ndarray
    subject_ids: List[str]
    labels: np.ndarray
    scores: np.ndarray
    predictions: np.ndarray
    ap: float
    accuracy: float
    lam: float
    train_objective: float
    # all landmarks, before any top-k selection
    train_features: np.ndarray
    test_features: np.ndarray
    cv_table: Optional[pd.DataFrame] = field(default=None)

    @property
    def num_features(self) -> int:
        return self.model.num_features

    def report_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"subject_id": self.subject_ids, "label": self.labels,
                             "score": self.scores, "prediction": self.predictions})

    def summary(self) -> Dict[str, float]:
        return {"accuracy": self.accuracy, "ap": self.ap, "lam": self.lam, "train_objective": self.train_objective,
                "features": self.num_features, "landmarks": len(self.landmarks)}

    def importance_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"rank": np.arange(len(self.ranking.order)), "landmark": self.ranking.order,
                             "importance": self.ranking.importance[self.ranking.order]})


def classify_shapes(train: ShapeSplit, test: ShapeSplit, config: Optional[ClassifyConfig] = None) -> ClassificationResult:
    config = config if config is not None else ClassifyConfig()
    n_train = len(train.subject_ids)
    if n_train == 0 or len(test.subject_ids) == 0:
        raise DataError("classification needs non-empty train and test splits")
    aligned = gpa(train.t0 + train.t1, config.gpa_tol, config.gpa_max_iter)
    num_landmarks, dim = aligned.mean.shape
    train_features = shape_features(aligned.aligned[:n_train], aligned.aligned[n_train:])
    test_features = shape_features(align_to_mean(test.t0, aligned.mean), align_to_mean(test.t1, aligned.mean))

    lam, cv_table = config.lam, None
    if config.cross_validate:
        lam, cv_table = cross_validate_lambda(train_features, train.labels, config)
    model = dwd_train(train_features, train.labels, config, lam=lam)
    ranking = landmark_importance(model, num_landmarks, dim)

    selected = np.arange(num_landmarks)
    columns = feature_columns(selected, num_landmarks, dim)
    if config.top_k is not None:
        selected = ranking.top(min(config.top_k, num_landmarks))
        columns = feature_columns(selected, num_landmarks, dim)
        model = dwd_train(train_features[:, columns], train.labels, config, lam=lam)

    scores, predictions = dwd_predict(model, test_features[:, columns])
    result = ClassificationResult(
        model=model, ranking=ranking, landmarks=selected, subject_ids=test.subject_ids, labels=test.labels,
        scores=scores, predictions=predictions, ap=average_precision(scores, test.labels),
        accuracy=accuracy(predictions, test.labels), lam=lam,
        train_objective=dwd_objective(model, train_features[:, columns], train.labels),
        train_features=train_features, test_features=test_features, cv_table=cv_table,
    )
    logger.info("Classification finished", ap=round(result.ap, 4), accuracy=round(result.accuracy, 4),
                features=result.num_features, lam=lam,
                train_objective=round(result.train_objective, 6), converged=model.converged)
    return result
