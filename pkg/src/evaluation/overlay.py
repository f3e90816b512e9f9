"""PNG/PGM overlays: grayscale image, cross markers, optional saliency heat."""

from pathlib import Path
from typing import Iterable, Optional, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.image as mpimg  # noqa: E402
import numpy as np  # noqa: E402

from src.errors import DataError  # noqa: E402
from src.fields.grid import Image  # noqa: E402
from src.model.proposal import LandmarkSet  # noqa: E402

MARKER = np.array([1.0, 0.15, 0.15])
HIGHLIGHT = np.array([1.0, 0.85, 0.0])
HEAT = np.array([0.55, 0.0, 0.75])
ARM = 2


def _unit_range(values: np.ndarray) -> np.ndarray:
    low, high = float(values.min()), float(values.max())
    if high - low <= 0:
        return np.zeros_like(values, dtype=np.float64)
    return (values - low) / (high - low)


def _plane(image: Image, slice_axis: int, slice_index: Optional[int]) -> np.ndarray:
    if image.grid.dim == 2:
        return image.values
    if slice_index is None:
        slice_index = image.grid.dims[slice_axis] // 2
    return np.take(image.values, slice_index, axis=slice_axis)


def overlay_pixels(image: Image, landmarks: Union[LandmarkSet, np.ndarray, None] = None,
                   highlight: Iterable[int] = (), saliency: Optional[Image] = None,
                   slice_axis: int = 0, slice_index: Optional[int] = None) -> np.ndarray:
    """RGB array in [0, 1] with axis 0 as rows."""
    grid = image.grid
    if grid.dim == 3 and slice_index is None:
        slice_index = grid.dims[slice_axis] // 2
    gray = _unit_range(_plane(image, slice_axis, slice_index))
    rgb = np.repeat(gray[..., None], 3, axis=-1)

    if saliency is not None:
        heat = _unit_range(_plane(saliency, slice_axis, slice_index))[..., None]
        rgb = (1.0 - heat) * rgb + heat * HEAT

    points = np.zeros((0, grid.dim)) if landmarks is None else np.asarray(
        landmarks.points if isinstance(landmarks, LandmarkSet) else landmarks, dtype=np.float64
    ).reshape(-1, grid.dim)
    highlight = set(int(i) for i in highlight)
    index = grid.world_to_index(points)
    if grid.dim == 3:
        keep = np.abs(index[:, slice_axis] - slice_index) <= 0.5
        in_plane = np.delete(index, slice_axis, axis=1)
    else:
        keep = np.ones(len(points), dtype=bool)
        in_plane = index
    rows, cols = rgb.shape[:2]
    order = [i for i in range(len(points)) if i not in highlight] + sorted(i for i in highlight if i < len(points))
    for i in order:
        if not keep[i]:
            continue
        r, c = (int(v) for v in np.rint(in_plane[i]))
        color = HIGHLIGHT if i in highlight else MARKER
        for dr in range(-ARM, ARM + 1):
            if 0 <= r + dr < rows and 0 <= c < cols:
                rgb[r + dr, c] = color
        for dc in range(-ARM, ARM + 1):
            if 0 <= r < rows and 0 <= c + dc < cols:
                rgb[r, c + dc] = color
    return rgb


def render_overlay(image: Image, landmarks: Union[LandmarkSet, np.ndarray, None], highlight: Iterable[int],
                   path: Union[str, Path], saliency: Optional[Image] = None, slice_axis: int = 0,
                   slice_index: Optional[int] = None) -> Path:
    """Write the overlay as PNG, or binary PGM (grayscale base only) for a .pgm path."""
    path = Path(path)
    rgb = overlay_pixels(image, landmarks, highlight, saliency, slice_axis, slice_index)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.suffix.lower() == ".pgm":
            gray = np.rint(rgb.mean(axis=-1) * 255).astype(np.uint8)
            header = f"P5\n{gray.shape[1]} {gray.shape[0]}\n255\n".encode("ascii")
            path.write_bytes(header + gray.tobytes())
        else:
            mpimg.imsave(path, np.ascontiguousarray(rgb), format="png", metadata={"Software": None})
    except OSError as exc:
        raise DataError(f"cannot write overlay to {path}: {exc}") from exc
    return path
