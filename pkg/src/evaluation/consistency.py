"""Landmark consistency metrics in a common (anchor) frame."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from src.config import settings
from src.errors import DataError, ShapeMismatchError
from src.evaluation.config import EvalConfig
from src.fields.grid import TransformField
from src.model.proposal import LandmarkSet
from src.synth.cohort import Cohort, image_id
from src.synth.registration import RegistrationProvider

REPORT_COLUMNS = ["pair_id", "chamfer", "x", "y", "z", "total"]
AXES = ("x", "y", "z")
PointsLike = Union[LandmarkSet, np.ndarray]


def _points(points: PointsLike) -> np.ndarray:
    return np.asarray(points.points if isinstance(points, LandmarkSet) else points, dtype=np.float64)


def _mapped(p_a: PointsLike, p_b: PointsLike, phi_ca: TransformField,
            phi_cb: TransformField) -> Tuple[np.ndarray, np.ndarray]:
    a, b = _points(p_a), _points(p_b)
    if a.size == 0 or b.size == 0:
        raise DataError("consistency metrics need non-empty landmark sets")
    return phi_ca.apply(a), phi_cb.apply(b)


def chamfer_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Symmetric mean nearest-neighbor distance between two point clouds."""
    if x.size == 0 or y.size == 0:
        raise DataError("chamfer distance of an empty point set")
    x_to_y, _ = cKDTree(y).query(x)
    y_to_x, _ = cKDTree(x).query(y)
    return float(0.5 * (x_to_y.mean() + y_to_x.mean()))


def chamfer_consistency(p_a: PointsLike, p_b: PointsLike, phi_ca: TransformField, phi_cb: TransformField) -> float:
    return chamfer_distance(*_mapped(p_a, p_b, phi_ca, phi_cb))


@dataclass(frozen=True)
class OrderedError:
    per_axis: np.ndarray
    total: float


def ordered_consistency(p_a: PointsLike, p_b: PointsLike, phi_ca: TransformField,
                        phi_cb: TransformField) -> OrderedError:
    """Index-matched error: per-axis mean |difference| and mean Euclidean distance."""
    a, b = _points(p_a), _points(p_b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"ordered sets differ in shape: {a.shape} vs {b.shape}")
    mapped_a, mapped_b = _mapped(a, b, phi_ca, phi_cb)
    diff = mapped_a - mapped_b
    return OrderedError(np.mean(np.abs(diff), axis=0), float(np.mean(np.linalg.norm(diff, axis=1))))


@dataclass(frozen=True)
class EvalPair:
    """Images a and b compared in the frame of anchor c."""

    a: str
    b: str
    c: str

    @property
    def pair_id(self) -> str:
        return f"{self.a}|{self.b}@{self.c}"


def evaluation_pairs(cohort: Cohort, config: EvalConfig) -> List[EvalPair]:
    """Pairs of images from different subjects, each with an anchor from a third subject."""
    subjects = {"test": cohort.test_subjects, "train": cohort.train_subjects, "all": cohort.subjects}[config.subjects]
    if len(subjects) < 3:
        subjects = cohort.subjects
    if len(subjects) < 3:
        raise DataError(f"evaluation needs at least 3 subjects, cohort has {len(subjects)}")
    ids = [s.subject_id for s in subjects]
    rng = np.random.default_rng(config.seed)
    pairs = []
    for _ in range(config.num_pairs):
        sa, sb, sc = rng.choice(len(ids), size=3, replace=False)
        ta, tb, tc = rng.integers(0, 2, size=3)
        pairs.append(EvalPair(image_id(ids[sa], int(ta)), image_id(ids[sb], int(tb)), image_id(ids[sc], int(tc))))
    return pairs


@dataclass
class ConsistencyReport:
    rows: pd.DataFrame

    @property
    def chamfer_mm(self) -> float:
        return float(self.rows["chamfer"].mean())

    @property
    def ordered_per_axis(self) -> np.ndarray:
        return self.rows[[a for a in AXES if self.rows[a].notna().any()]].mean().to_numpy()

    @property
    def ordered_total_mm(self) -> float:
        return float(self.rows["total"].mean())

    def summary(self) -> Dict[str, Tuple[float, float]]:
        """mean and std of every metric column over pairs."""
        out = {}
        for column in REPORT_COLUMNS[1:]:
            values = self.rows[column].dropna()
            if len(values):
                out[column] = (float(values.mean()), float(values.std(ddof=0)))
        return out

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"metric": k, "mean": m, "std": s} for k, (m, s) in self.summary().items()]
        )

    def to_csv(self, path) -> None:
        self.rows.to_csv(path, index=False, columns=REPORT_COLUMNS)


def pair_row(pair_id: str, p_a: PointsLike, p_b: PointsLike, phi_ca: TransformField,
             phi_cb: TransformField) -> Dict[str, float]:
    ordered = ordered_consistency(p_a, p_b, phi_ca, phi_cb)
    row = {"pair_id": pair_id, "chamfer": chamfer_consistency(p_a, p_b, phi_ca, phi_cb)}
    for axis, name in enumerate(AXES):
        row[name] = float(ordered.per_axis[axis]) if axis < len(ordered.per_axis) else float("nan")
    row["total"] = ordered.total
    return row


def consistency_report(pairs: Sequence[EvalPair], landmarks: Mapping[str, PointsLike],
                       registration: RegistrationProvider) -> ConsistencyReport:
    """Evaluate every pair; ``landmarks`` maps image id -> landmark set."""
    for pair in pairs:
        for key in (pair.a, pair.b):
            if key not in landmarks:
                raise DataError(f"no landmarks for image {key!r}")

    def evaluate(pair: EvalPair) -> Dict[str, float]:
        return pair_row(pair.pair_id, landmarks[pair.a], landmarks[pair.b],
                        registration.to_anchor(pair.a, pair.c), registration.to_anchor(pair.b, pair.c))

    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        rows = list(pool.map(evaluate, pairs))
    return ConsistencyReport(pd.DataFrame(rows, columns=REPORT_COLUMNS))


def ground_truth_landmarks(cohort: Cohort) -> Dict[str, LandmarkSet]:
    return {image_id(s.subject_id, tp): s.landmarks(tp) for s in cohort.subjects for tp in (0, 1)}
