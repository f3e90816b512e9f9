"""Nadaraya-Watson deformation reconstruction and the image-similarity loss."""

import numpy as np

from src.autodiff import DiffValue
from src.autodiff import primitives as P
from src.errors import DataError
from src.fields.grid import DenseField, Grid, Image, TransformField, require_same_grid
from src.fields.ops import mse, warp_image
from src.losses.config import LossConfig
from src.losses.discovery import Points, _require_same_length, _tape_for, as_points


def nw_kernel(x, p, sigma: float) -> float:
    """K(x, p) = exp(-||x - p||^2 / (2 sigma^2))"""
    if not sigma > 0:
        raise DataError(f"sigma must be > 0, got {sigma}")
    diff = np.asarray(x, dtype=np.float64) - np.asarray(p, dtype=np.float64)
    return float(np.exp(-np.dot(diff, diff) / (2.0 * sigma**2)))


def nw_displacement(p_src: Points, p_tgt: Points, grid: Grid, config: LossConfig) -> DiffValue:
    """Differentiable NW displacement at every node of ``grid`` (target space), (size, dim).

    D(x) = sum_i K(x, p_i,tgt) (p_i,src - p_i,tgt) / max(sum_i K(x, p_i,tgt), eps)
    """
    tape = _tape_for(p_src, p_tgt)
    p_src, p_tgt = as_points(tape, p_src), as_points(tape, p_tgt)
    _require_same_length(p_src, p_tgt)
    if p_src.shape[0] == 0:
        raise DataError("cannot reconstruct a field from empty landmark sets")
    if p_src.shape[1] != grid.dim:
        raise DataError(f"{p_src.shape[1]}D landmarks on a {grid.dim}D grid")

    nodes = grid.points()
    diff = P.reshape(p_tgt, (1,) + p_tgt.shape) - nodes[:, None, :]
    sq_dist = P.squared_norm(diff, axis=2)
    weights = P.exp(sq_dist * (-1.0 / (2.0 * config.sigma**2)))
    numerator = weights @ (p_src - p_tgt)
    denominator = P.maximum(P.sum(weights, axis=1, keepdims=True), config.nw_epsilon)
    return numerator / denominator


def nw_reconstruct(p_src: Points, p_tgt: Points, grid: Grid, config: LossConfig) -> DenseField:
    displacement = nw_displacement(p_src, p_tgt, grid, config)
    return DenseField(grid, displacement.value.reshape(grid.dims + (grid.dim,)))


def reconstruct_transform(p_src: Points, p_tgt: Points, grid: Grid, config: LossConfig) -> TransformField:
    """Reconstructed map = Id + NW displacement."""
    return TransformField(nw_reconstruct(p_src, p_tgt, grid, config))


def warped_mse(source: Image, target: Image, p_src: DiffValue, p_tgt: DiffValue, config: LossConfig) -> DiffValue:
    """MSE(source o (Id + D_nw), target) with D_nw built on the target grid."""
    grid = target.grid
    displacement = nw_displacement(p_src, p_tgt, grid, config)
    coords = displacement + grid.points()
    values = p_src.tape.constant(source.values.reshape(-1, 1))
    warped = P.sample(values, coords, source.grid)
    residual = warped - target.values.reshape(-1, 1)
    return P.mean(P.square(residual))


def recon_loss(i_a: Image, i_b: Image, i_c: Image, p_a: Points, p_b: Points, p_c: Points,
               config: LossConfig) -> DiffValue:
    """MSE(I_a o Phi~_ac, I_c) + MSE(I_b o Phi~_bc, I_c), fields on I_c's grid."""
    if i_a.grid.dim != i_c.grid.dim or i_b.grid.dim != i_c.grid.dim:
        raise DataError("reconstruction loss needs images of the same dimensionality")
    tape = _tape_for(p_a, p_b, p_c)
    p_a, p_b, p_c = as_points(tape, p_a), as_points(tape, p_b), as_points(tape, p_c)
    _require_same_length(p_a, p_b, p_c)
    return warped_mse(i_a, i_c, p_a, p_c, config) + warped_mse(i_b, i_c, p_b, p_c, config)


def reconstruction_error(source: Image, target: Image, transform: TransformField) -> float:
    """Plain MSE(source o transform, target) for diagnostics."""
    require_same_grid(transform.grid, target.grid, "reconstruction_error")
    return mse(warp_image(source, transform), target)
