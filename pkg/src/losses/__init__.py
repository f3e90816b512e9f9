from .config import LossConfig
from .discovery import (
    map_landmarks,
    out_of_domain_fraction,
    discovery_pair,
    discovery_anchor,
    discovery_one_directional,
    discovery_terms,
    discovery_total,
    landmark_spread,
)
from .reconstruction import (
    nw_kernel,
    nw_displacement,
    nw_reconstruct,
    reconstruct_transform,
    recon_loss,
    reconstruction_error,
)
from .total import LOG_COLUMNS, LossBreakdown, LossRecord, total_loss, triplet_loss

__all__ = [
    "LossConfig",
    "map_landmarks",
    "out_of_domain_fraction",
    "discovery_pair",
    "discovery_anchor",
    "discovery_one_directional",
    "discovery_terms",
    "discovery_total",
    "landmark_spread",
    "nw_kernel",
    "nw_displacement",
    "nw_reconstruct",
    "reconstruct_transform",
    "recon_loss",
    "reconstruction_error",
    "LOG_COLUMNS",
    "LossBreakdown",
    "LossRecord",
    "total_loss",
    "triplet_loss",
]
