"""Multilinear (bi/trilinear) interpolation stencils.

A stencil holds, for every query point, the flat indices of the 2**dim
surrounding nodes, their interpolation weights and the derivative of each
weight with respect to the query's world coordinates. Both the plain field
operations and the differentiable sampling primitive are built on it.

Out-of-domain queries are clamped to the boundary; the coordinate
derivative is zero along any axis where clamping was active.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np

from src.errors import DataError
from src.fields.grid import Grid


@dataclass(frozen=True)
class Stencil:
    indices: np.ndarray   # (M, 2**dim) flat node indices
    weights: np.ndarray   # (M, 2**dim)
    dweights: np.ndarray  # (M, 2**dim, dim) d weight / d world coordinate
    inside: np.ndarray    # (M,) query lies in the closed domain

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Interpolate node values of shape (size, C) -> (M, C)."""
        return np.einsum("mk,mkc->mc", self.weights, values[self.indices])

    def apply_gradient(self, values: np.ndarray) -> np.ndarray:
        """Spatial derivative of the interpolant, (size, C) -> (M, C, dim)."""
        return np.einsum("mkd,mkc->mcd", self.dweights, values[self.indices])


def stencil_from_index(grid: Grid, u: np.ndarray) -> Stencil:
    """Build a stencil from continuous index coordinates ``u`` of shape (M, dim)."""
    u = np.asarray(u, dtype=np.float64).reshape(-1, grid.dim)
    if not np.all(np.isfinite(u)):
        raise DataError("sample points must be finite (found NaN or inf)")

    upper = np.asarray(grid.dims, dtype=np.float64) - 1.0
    clamped = np.clip(u, 0.0, upper)
    active = (u >= 0.0) & (u <= upper)
    base = np.clip(np.floor(clamped), 0, upper - 1).astype(np.int64)
    t = clamped - base

    inv_spacing = 1.0 / np.asarray(grid.spacing)
    corners = list(product((0, 1), repeat=grid.dim))
    m = u.shape[0]
    indices = np.empty((m, len(corners)), dtype=np.int64)
    weights = np.empty((m, len(corners)))
    dweights = np.empty((m, len(corners), grid.dim))

    for k, corner in enumerate(corners):
        corner = np.asarray(corner)
        factors = np.where(corner == 1, t, 1.0 - t)
        signs = np.where(corner == 1, 1.0, -1.0)
        idx = base + corner
        indices[:, k] = np.ravel_multi_index(tuple(idx.T), grid.dims)
        weights[:, k] = np.prod(factors, axis=1)
        for axis in range(grid.dim):
            others = np.prod(np.delete(factors, axis, axis=1), axis=1)
            dweights[:, k, axis] = signs[axis] * others * inv_spacing[axis] * active[:, axis]

    return Stencil(indices=indices, weights=weights, dweights=dweights, inside=np.all(active, axis=1))


def stencil_from_world(grid: Grid, points: np.ndarray) -> Stencil:
    points = np.asarray(points, dtype=np.float64)
    if not np.all(np.isfinite(points)):
        raise DataError("sample points must be finite (found NaN or inf)")
    return stencil_from_index(grid, grid.world_to_index(points.reshape(-1, grid.dim)))
