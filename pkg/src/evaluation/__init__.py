from .config import EvalConfig
from .consistency import (
    REPORT_COLUMNS,
    ConsistencyReport,
    EvalPair,
    OrderedError,
    chamfer_consistency,
    chamfer_distance,
    consistency_report,
    evaluation_pairs,
    ground_truth_landmarks,
    ordered_consistency,
)
from .diagnostics import mean_recon_loss, reconstruction_diagnostics
from .saliency import saliency
from .overlay import overlay_pixels, render_overlay

__all__ = [
    "EvalConfig",
    "REPORT_COLUMNS",
    "ConsistencyReport",
    "EvalPair",
    "OrderedError",
    "chamfer_consistency",
    "chamfer_distance",
    "consistency_report",
    "evaluation_pairs",
    "ground_truth_landmarks",
    "ordered_consistency",
    "mean_recon_loss",
    "reconstruction_diagnostics",
    "saliency",
    "overlay_pixels",
    "render_overlay",
]
