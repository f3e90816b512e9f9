"""Generalized Procrustes analysis with similarity transforms."""

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from src.errors import DataError, ShapeMismatchError
from src.logger import logger
from src.model.proposal import LandmarkSet

ShapeLike = Union[LandmarkSet, np.ndarray]


@dataclass(frozen=True)
class AlignedShapes:
    aligned: np.ndarray
    mean: np.ndarray
    residual: float
    iterations: int


def _as_array(shape: ShapeLike) -> np.ndarray:
    return np.asarray(shape.points if isinstance(shape, LandmarkSet) else shape, dtype=np.float64)


def _centered(shape: np.ndarray) -> np.ndarray:
    centered = shape - shape.mean(axis=0)
    if np.linalg.norm(centered) <= 1e-12:
        raise DataError("degenerate shape: all landmarks coincide")
    return centered


def similarity_align(points: np.ndarray, reference: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float, np.ndarray]:
    """Least-squares rotation, isotropic scale and translation taking points onto reference.

    Returns (aligned points, rotation, scale, translation); reflections are excluded.
    """
    if points.shape != reference.shape:
        raise ShapeMismatchError(f"cannot align shapes {points.shape} and {reference.shape}")
    mu_p, mu_r = points.mean(axis=0), reference.mean(axis=0)
    a, b = _centered(points), reference - mu_r
    u, s, vt = np.linalg.svd(a.T @ b)
    signs = np.ones(len(s))
    if np.linalg.det(u @ vt) < 0:
        signs[-1] = -1.0
    rotation = (u * signs) @ vt
    scale = float(np.sum(s * signs) / np.sum(a * a))
    aligned = scale * a @ rotation + mu_r
    return aligned, rotation, scale, mu_r - scale * mu_p @ rotation


def _unit(shape: np.ndarray) -> np.ndarray:
    centered = _centered(shape)
    return centered / np.linalg.norm(centered)


def _canonical_rotation(mean: np.ndarray) -> np.ndarray:
    """Rotation taking the mean's principal axes onto the coordinate axes, signs fixed by skew."""
    _, _, vt = np.linalg.svd(mean, full_matrices=False)
    rotation = vt.T.copy()
    projected = mean @ rotation
    for k in range(rotation.shape[1] - 1):
        if np.sum(projected[:, k] ** 3) < 0:
            rotation[:, k] *= -1.0
    if np.linalg.det(rotation) < 0:
        rotation[:, -1] *= -1.0
    return rotation


def gpa(shapes: Sequence[ShapeLike], tol: float = 1e-8, max_iter: int = 100) -> AlignedShapes:
    """Align every shape to a converged unit-size, centered mean shape."""
    arrays = [_as_array(s) for s in shapes]
    if len(arrays) < 2:
        raise DataError(f"gpa needs at least 2 shapes, got {len(arrays)}")
    if len({a.shape for a in arrays}) != 1:
        raise ShapeMismatchError(f"shapes differ in size: {sorted({a.shape for a in arrays})}")
    for a in arrays:
        _centered(a)

    mean = _unit(arrays[0])
    change, iterations = float("inf"), 0
    for iterations in range(1, max_iter + 1):
        aligned = np.stack([similarity_align(a, mean)[0] for a in arrays])
        new_mean = _unit(aligned.mean(axis=0))
        new_mean = similarity_align(new_mean, mean)[0]
        new_mean = _unit(new_mean)
        change = float(np.linalg.norm(new_mean - mean))
        mean = new_mean
        if change < tol:
            break
    else:
        logger.warning("GPA did not converge", iterations=max_iter, change=change)

    rotation = _canonical_rotation(mean)
    mean = mean @ rotation
    aligned = np.stack([similarity_align(a, mean)[0] for a in arrays])
    return AlignedShapes(aligned, mean, change, iterations)


def align_to_mean(shapes: Sequence[ShapeLike], mean: np.ndarray) -> np.ndarray:
    """Similarity-align new shapes to an existing GPA mean."""
    return np.stack([similarity_align(_as_array(s), mean)[0] for s in shapes])
