"""Weighted total objective."""

from dataclasses import dataclass
from typing import Dict

from pydantic import BaseModel

from src.autodiff import DiffValue
from src.errors import DataError
from src.fields.grid import Image, TransformField
from src.losses.config import LossConfig
from src.losses.discovery import Points, _tape_for, as_points, discovery_one_directional, discovery_terms
from src.losses.reconstruction import recon_loss

LOG_COLUMNS = ("l_d_ab", "l_d_ca", "l_d_cb", "l_d_total", "l_recon", "total")


class LossRecord(BaseModel):
    """Float snapshot of a LossBreakdown for logs."""

    l_d_ab: float
    l_d_ca: float
    l_d_cb: float
    l_d_total: float
    l_recon: float
    total: float


@dataclass(frozen=True)
class LossBreakdown:
    """All loss terms of one triplet; total = lambda_d * l_d_total + lambda_recon * l_recon."""

    l_d_ab: DiffValue
    l_d_ca: DiffValue
    l_d_cb: DiffValue
    l_d_total: DiffValue
    l_recon: DiffValue
    total: DiffValue

    def record(self) -> LossRecord:
        return LossRecord(**{name: float(getattr(self, name).value) for name in LOG_COLUMNS})

    def as_row(self) -> Dict[str, float]:
        return self.record().model_dump()


def total_loss(l_d_ab: DiffValue, l_d_ca: DiffValue, l_d_cb: DiffValue, l_recon: DiffValue,
               config: LossConfig) -> LossBreakdown:
    if config.lambda_d < 0 or config.lambda_recon < 0:
        raise DataError("loss weights must be >= 0")
    l_d_total = l_d_ab + l_d_ca + l_d_cb
    total = l_d_total * config.lambda_d + l_recon * config.lambda_recon
    return LossBreakdown(l_d_ab, l_d_ca, l_d_cb, l_d_total, l_recon, total)


def triplet_loss(i_a: Image, i_b: Image, i_c: Image, p_a: Points, p_b: Points, p_c: Points,
                 phi_ca: TransformField, phi_cb: TransformField, config: LossConfig) -> LossBreakdown:
    """Full objective of one triplet (anchor c).

    ``phi_ca`` carries landmarks of image a into c's frame, ``phi_cb`` those of b.
    With ``config.discovery == "pairwise"`` the discovery term is the
    one-directional consistency of a against the anchor,
    ``mean ||p_c - phi_ca(p_a)||^2``, reported in the ``l_d_ab`` slot; b then
    enters through the reconstruction term only.
    """
    tape = _tape_for(p_a, p_b, p_c)
    p_a, p_b, p_c = as_points(tape, p_a), as_points(tape, p_b), as_points(tape, p_c)
    if config.discovery == "pairwise":
        l_ab = discovery_one_directional(p_c, p_a, phi_ca)
        zero = tape.constant(0.0)
        l_ca, l_cb = zero, zero
    else:
        l_ab, l_ca, l_cb = discovery_terms(p_a, p_b, p_c, phi_ca, phi_cb)
    return total_loss(l_ab, l_ca, l_cb, recon_loss(i_a, i_b, i_c, p_a, p_b, p_c, config), config)
