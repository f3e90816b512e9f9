"""Regular grids and the fields that live on them.

All coordinates are world units (mm). A grid node with integer index ``k``
sits at ``origin + k * spacing``; arrays are stored row-major with axis 0
first, so ``values[k0, k1]`` is the node ``(k0, k1)``.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from src.errors import DataError, ShapeMismatchError


class Grid(BaseModel):
    """Regular lattice with per-axis point counts, spacing and origin."""

    model_config = ConfigDict(frozen=True)

    dims: Tuple[int, ...]
    spacing: Tuple[float, ...]
    origin: Tuple[float, ...]

    @model_validator(mode="after")
    def _check(self) -> "Grid":
        n = len(self.dims)
        if n not in (2, 3):
            raise ValueError(f"grid dimensionality must be 2 or 3, got {n}")
        if len(self.spacing) != n or len(self.origin) != n:
            raise ValueError("dims, spacing and origin must have the same length")
        if any(d < 2 for d in self.dims):
            raise ValueError(f"all dims must be >= 2, got {self.dims}")
        if any(not (s > 0) for s in self.spacing):
            raise ValueError(f"all spacings must be > 0, got {self.spacing}")
        if not all(np.isfinite(self.origin)):
            raise ValueError("origin must be finite")
        return self

    @classmethod
    def regular(cls, dims: Sequence[int], spacing=1.0, origin=0.0) -> "Grid":
        n = len(dims)
        spacing = (float(spacing),) * n if np.isscalar(spacing) else tuple(float(s) for s in spacing)
        origin = (float(origin),) * n if np.isscalar(origin) else tuple(float(o) for o in origin)
        return cls(dims=tuple(int(d) for d in dims), spacing=spacing, origin=origin)

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def extent(self) -> np.ndarray:
        return (np.asarray(self.dims) - 1) * np.asarray(self.spacing)

    def index_points(self) -> np.ndarray:
        """Integer node indices in row-major order, shape (size, dim), float."""
        axes = [np.arange(d, dtype=np.float64) for d in self.dims]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def points(self) -> np.ndarray:
        """World coordinates of every node in row-major order, shape (size, dim)."""
        return self.index_to_world(self.index_points())

    def world_to_index(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - np.asarray(self.origin)) / np.asarray(self.spacing)

    def index_to_world(self, indices: np.ndarray) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(indices, dtype=np.float64) * np.asarray(self.spacing)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Per-point flag: inside the closed world box of the grid."""
        u = self.world_to_index(points)
        upper = np.asarray(self.dims) - 1
        return np.all((u >= 0) & (u <= upper), axis=-1)

    def downsample(self, factors: Sequence[int]) -> "Grid":
        """Coarse grid whose nodes sit at the centers of ``factors``-sized cells."""
        factors = tuple(int(f) for f in factors)
        if len(factors) != self.dim:
            raise ShapeMismatchError(f"need {self.dim} downsampling factors, got {len(factors)}")
        for d, f in zip(self.dims, factors):
            if f < 1 or d % f != 0:
                raise DataError(f"grid axis of {d} points is not an integer multiple of {f}")
        spacing = tuple(s * f for s, f in zip(self.spacing, factors))
        origin = tuple(o + 0.5 * (f - 1) * s for o, f, s in zip(self.origin, factors, self.spacing))
        return Grid(dims=tuple(d // f for d, f in zip(self.dims, factors)), spacing=spacing, origin=origin)

    def same_as(self, other: "Grid", rtol: float = 1e-12) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, rtol=rtol, atol=0.0)
            and np.allclose(self.origin, other.origin, rtol=rtol, atol=1e-12)
        )


def require_same_grid(a: Grid, b: Grid, what: str = "operands") -> None:
    if a.dim != b.dim:
        raise ShapeMismatchError(f"{what}: dimensionality {a.dim} vs {b.dim}")
    if not a.same_as(b):
        raise ShapeMismatchError(f"{what}: grid mismatch {a.dims}/{a.spacing} vs {b.dims}/{b.spacing}")


@dataclass(frozen=True)
class Image:
    """Scalar values on a grid, array shape == grid.dims."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.size != self.grid.size:
            raise ShapeMismatchError(f"image has {values.size} values for a grid of {self.grid.size} nodes")
        values = values.reshape(self.grid.dims)
        if not np.all(np.isfinite(values)):
            raise DataError("image values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


@dataclass(frozen=True)
class DenseField:
    """dim-component vectors (mm) on a grid, array shape == grid.dims + (dim,)."""

    grid: Grid
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        expected = self.grid.size * self.grid.dim
        if vectors.size != expected:
            raise ShapeMismatchError(f"field has {vectors.size} components, expected {expected}")
        vectors = vectors.reshape(self.grid.dims + (self.grid.dim,))
        if not np.all(np.isfinite(vectors)):
            raise DataError("field components must be finite")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    def flat(self) -> np.ndarray:
        return self.vectors.reshape(-1, self.grid.dim)

    def scaled(self, factor: float) -> "DenseField":
        return DenseField(self.grid, self.vectors * factor)


@dataclass(frozen=True)
class TransformField:
    """Transformation stored as displacement: map(x) = x + displacement(x)."""

    displacement: DenseField

    @property
    def grid(self) -> Grid:
        return self.displacement.grid

    def map_points(self) -> np.ndarray:
        """Mapped world coordinates of every grid node, shape (size, dim)."""
        return self.grid.points() + self.displacement.flat()

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the map at arbitrary world points: p + D(p)."""
        from src.fields.ops import sample_field

        points = np.asarray(points, dtype=np.float64)
        return points + sample_field(self.displacement, points)
