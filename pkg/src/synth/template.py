"""Procedural template: a ring with a radial Gaussian profile plus Gaussian blobs.

The anatomical points are known analytically: the ring's cardinal points
(center +/- r0 along each axis) followed by the blob centers.
"""

from dataclasses import dataclass

import numpy as np

from src.errors import DataError
from src.fields.grid import Grid, Image
from src.manifest import sha256_bytes
from src.synth.config import CohortConfig


@dataclass(frozen=True)
class Template:
    image: Image
    points: np.ndarray
    center: np.ndarray
    blob_centers: np.ndarray

    @property
    def grid(self) -> Grid:
        return self.image.grid

    def content_hash(self) -> str:
        return sha256_bytes(np.ascontiguousarray(self.image.values, dtype="<f8").tobytes())


def cohort_grid(config: CohortConfig) -> Grid:
    return Grid.regular(config.image_dims, spacing=config.image_spacing, origin=0.0)


def ring_profile(radius: np.ndarray, config: CohortConfig) -> np.ndarray:
    """Radial intensity of the ring; peaks at r0 with value 1."""
    return np.exp(-((radius - config.ring_radius) ** 2) / (2.0 * config.ring_thickness**2))


def make_template(config: CohortConfig) -> Template:
    grid = cohort_grid(config)
    center = grid.index_to_world((np.asarray(grid.dims) - 1) / 2.0)
    low, high = np.asarray(grid.origin), np.asarray(grid.origin) + grid.extent

    ring_reach = config.ring_radius + 3.0 * config.ring_thickness
    if np.any(center - ring_reach < low) or np.any(center + ring_reach > high):
        raise DataError(
            f"ring of radius {config.ring_radius} (+3 x {config.ring_thickness}) exceeds the image extent {grid.extent}"
        )
    blob_centers = center + np.asarray(config.resolved_blob_offsets(), dtype=np.float64).reshape(-1, grid.dim) * config.ring_radius
    blob_reach = 3.0 * config.blob_radius
    for blob in blob_centers:
        if np.any(blob - blob_reach < low) or np.any(blob + blob_reach > high):
            raise DataError(f"blob at {blob.tolist()} (+3 x {config.blob_radius}) exceeds the image extent")

    x = grid.points()
    values = ring_profile(np.linalg.norm(x - center, axis=1), config)
    for blob in blob_centers:
        values = values + config.blob_intensity * np.exp(
            -np.sum((x - blob) ** 2, axis=1) / (2.0 * config.blob_radius**2)
        )

    cardinal = []
    for axis in range(grid.dim):
        for sign in (1.0, -1.0):
            point = center.copy()
            point[axis] += sign * config.ring_radius
            cardinal.append(point)
    points = np.vstack([np.asarray(cardinal), blob_centers]) if len(blob_centers) else np.asarray(cardinal)
    return Template(Image(grid, values.reshape(grid.dims)), points, center, blob_centers)
