"""Pure operations on grids, images and transformation fields."""

from typing import Union

import numpy as np

from src.errors import DataError, ShapeMismatchError
from src.fields.grid import DenseField, Grid, Image, TransformField, require_same_grid
from src.fields.sampling import stencil_from_index, stencil_from_world

DEFAULT_SVF_STEPS = 6


def identity_map(grid: Grid) -> TransformField:
    return TransformField(DenseField(grid, np.zeros(grid.dims + (grid.dim,))))


def _node_values(field: Union[DenseField, Image]) -> np.ndarray:
    if isinstance(field, Image):
        return field.values.reshape(-1, 1)
    return field.flat()


def sample_field(field: Union[DenseField, Image], points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation at world points with border clamping.

    Returns (M, dim) vectors for a DenseField and (M,) scalars for an Image.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points.reshape(1, -1)
    if points.shape[-1] != field.grid.dim:
        raise ShapeMismatchError(f"points have {points.shape[-1]} coordinates, field is {field.grid.dim}D")
    stencil = stencil_from_world(field.grid, points)
    out = stencil.apply(_node_values(field))
    return out[:, 0] if isinstance(field, Image) else out


def _sample_on_own_grid(field: Union[DenseField, Image], grid: Grid, displacement: np.ndarray) -> np.ndarray:
    """Sample ``field`` at ``grid`` nodes moved by ``displacement`` (size, dim).

    When the grids coincide the query is formed in index space so that a
    zero displacement lands exactly on the nodes.
    """
    if field.grid.same_as(grid):
        u = grid.index_points() + displacement / np.asarray(grid.spacing)
        stencil = stencil_from_index(grid, u)
    else:
        stencil = stencil_from_world(field.grid, grid.points() + displacement)
    return stencil.apply(_node_values(field))


def warp_image(source: Image, transform: TransformField) -> Image:
    """output(x) = source(transform(x)) on the transform's grid."""
    if source.grid.dim != transform.grid.dim:
        raise ShapeMismatchError(
            f"cannot warp a {source.grid.dim}D image with a {transform.grid.dim}D transform"
        )
    sampled = _sample_on_own_grid(source, transform.grid, transform.displacement.flat())
    return Image(transform.grid, sampled[:, 0].reshape(transform.grid.dims))


def compose(outer: TransformField, inner: TransformField) -> TransformField:
    """result(x) = outer(inner(x)); inner evaluated exactly, outer interpolated."""
    require_same_grid(outer.grid, inner.grid, "compose")
    grid = inner.grid
    d_inner = inner.displacement.flat()
    d_outer = _sample_on_own_grid(outer.displacement, grid, d_inner)
    return TransformField(DenseField(grid, (d_inner + d_outer).reshape(grid.dims + (grid.dim,))))


def exp_svf(velocity: DenseField, steps: int = DEFAULT_SVF_STEPS) -> TransformField:
    """Flow of a stationary velocity field by scaling and squaring."""
    if steps < 1:
        raise DataError(f"exp_svf needs steps >= 1, got {steps}")
    if not np.all(np.isfinite(velocity.vectors)):
        raise DataError("velocity field must be finite")
    phi = TransformField(DenseField(velocity.grid, velocity.vectors / 2.0**steps))
    for _ in range(steps):
        phi = compose(phi, phi)
    return phi


def mse(a: Image, b: Image) -> float:
    require_same_grid(a.grid, b.grid, "mse")
    return float(np.mean((a.values - b.values) ** 2))


def field_mse(a: TransformField, b: TransformField) -> float:
    """Mean over nodes of the squared displacement difference (diagnostic only)."""
    require_same_grid(a.grid, b.grid, "field_mse")
    diff = a.displacement.flat() - b.displacement.flat()
    return float(np.mean(np.sum(diff**2, axis=1)))


def jacobian_determinant(transform: TransformField) -> np.ndarray:
    """Determinant of the map's spatial Jacobian at every node (central differences)."""
    grid = transform.grid
    mapped = transform.map_points().reshape(grid.dims + (grid.dim,))
    jac = np.empty(grid.dims + (grid.dim, grid.dim))
    for comp in range(grid.dim):
        grads = np.gradient(mapped[..., comp], *grid.spacing)
        for axis in range(grid.dim):
            jac[..., comp, axis] = grads[axis]
    return np.linalg.det(jac)


def negative_jacobian_fraction(transform: TransformField) -> float:
    return float(np.mean(jacobian_determinant(transform) <= 0.0))
