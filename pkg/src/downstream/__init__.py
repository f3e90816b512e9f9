from .config import ClassifyConfig
from .procrustes import AlignedShapes, align_to_mean, gpa, similarity_align
from .dwd import (
    LinearDWDModel,
    cross_validate_lambda,
    dwd_loss,
    dwd_objective,
    dwd_predict,
    dwd_train,
    load_dwd,
    save_dwd,
)
from .scoring import accuracy, average_precision
from .importance import ImportanceRanking, feature_columns, importance_histogram, landmark_importance, topk_curve
from .pipeline import ClassificationResult, ShapeSplit, classify_shapes, landmark_shapes, shape_features, with_labels

__all__ = [
    "ClassifyConfig",
    "AlignedShapes",
    "align_to_mean",
    "gpa",
    "similarity_align",
    "LinearDWDModel",
    "cross_validate_lambda",
    "dwd_loss",
    "dwd_objective",
    "dwd_predict",
    "dwd_train",
    "load_dwd",
    "save_dwd",
    "accuracy",
    "average_precision",
    "ImportanceRanking",
    "feature_columns",
    "importance_histogram",
    "landmark_importance",
    "topk_curve",
    "ClassificationResult",
    "ShapeSplit",
    "classify_shapes",
    "landmark_shapes",
    "shape_features",
    "with_labels",
]
