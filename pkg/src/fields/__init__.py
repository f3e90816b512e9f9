from .grid import Grid, Image, DenseField, TransformField
from .ops import (
    identity_map,
    sample_field,
    warp_image,
    compose,
    exp_svf,
    mse,
    field_mse,
    jacobian_determinant,
    negative_jacobian_fraction,
)

__all__ = [
    "Grid",
    "Image",
    "DenseField",
    "TransformField",
    "identity_map",
    "sample_field",
    "warp_image",
    "compose",
    "exp_svf",
    "mse",
    "field_mse",
    "jacobian_determinant",
    "negative_jacobian_fraction",
]
