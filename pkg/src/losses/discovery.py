"""Landmark discovery (cross-image consistency) losses.

A registration field here is the map that carries landmarks of one image
into the anchor's frame: ``phi(p) = p + D(p)`` with D sampled
multilinearly. Fields are constants; gradients flow into the landmarks only.
"""

from typing import Optional, Union

import numpy as np
from scipy.spatial.distance import pdist

from src.autodiff import DiffValue, Tape
from src.autodiff import primitives as P
from src.errors import ShapeMismatchError
from src.fields.grid import TransformField
from src.model.proposal import LandmarkSet

Points = Union[DiffValue, np.ndarray, LandmarkSet]


def _tape_for(*values) -> Tape:
    for value in values:
        if isinstance(value, DiffValue):
            return value.tape
    return Tape()


def as_points(tape: Tape, points: Points) -> DiffValue:
    if isinstance(points, DiffValue):
        return points
    if isinstance(points, LandmarkSet):
        points = points.points
    return tape.constant(np.asarray(points, dtype=np.float64))


def _require_same_length(*sets: DiffValue) -> None:
    shapes = {s.shape for s in sets}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"landmark sets differ in length or dimension: {sorted(shapes)}")


def map_landmarks(points: DiffValue, transform: TransformField) -> DiffValue:
    """phi(p) = p + D(p) recorded on the points' tape."""
    grid = transform.grid
    if points.shape[1] != grid.dim:
        raise ShapeMismatchError(f"{points.shape[1]}D landmarks cannot be mapped by a {grid.dim}D field")
    displacement = points.tape.constant(transform.displacement.flat())
    return points + P.sample(displacement, points, grid)


def out_of_domain_fraction(points: Points, transform: TransformField) -> float:
    """Share of landmarks outside the field's grid (they are clamped when mapped)."""
    if isinstance(points, DiffValue):
        points = points.value
    elif isinstance(points, LandmarkSet):
        points = points.points
    return float(np.mean(~transform.grid.contains(np.asarray(points))))


def _mean_squared_distance(x: DiffValue, y: DiffValue) -> DiffValue:
    return P.mean(P.squared_norm(x - y, axis=1))


def discovery_pair(p_a: Points, p_b: Points, phi_ca: TransformField, phi_cb: TransformField) -> DiffValue:
    """(1/N) sum_i || phi_ca(p_ia) - phi_cb(p_ib) ||^2"""
    tape = _tape_for(p_a, p_b)
    p_a, p_b = as_points(tape, p_a), as_points(tape, p_b)
    _require_same_length(p_a, p_b)
    return _mean_squared_distance(map_landmarks(p_a, phi_ca), map_landmarks(p_b, phi_cb))


def discovery_anchor(p_c: Points, p_x: Points, phi_cx: TransformField) -> DiffValue:
    """(1/N) sum_i || p_ic - phi_cx(p_ix) ||^2"""
    tape = _tape_for(p_c, p_x)
    p_c, p_x = as_points(tape, p_c), as_points(tape, p_x)
    _require_same_length(p_c, p_x)
    return _mean_squared_distance(p_c, map_landmarks(p_x, phi_cx))


def discovery_one_directional(p_a: Points, p_b: Points, phi_ab: TransformField) -> DiffValue:
    """(1/N) sum_i || p_ia - phi_ab(p_ib) ||^2 for the pairwise ablation."""
    return discovery_anchor(p_a, p_b, phi_ab)


def discovery_terms(p_a: Points, p_b: Points, p_c: Points, phi_ca: TransformField,
                    phi_cb: TransformField) -> tuple:
    """The three triplet terms (ab, ca, cb) on one tape."""
    tape = _tape_for(p_a, p_b, p_c)
    p_a, p_b, p_c = as_points(tape, p_a), as_points(tape, p_b), as_points(tape, p_c)
    _require_same_length(p_a, p_b, p_c)
    mapped_a = map_landmarks(p_a, phi_ca)
    mapped_b = map_landmarks(p_b, phi_cb)
    return (
        _mean_squared_distance(mapped_a, mapped_b),
        _mean_squared_distance(p_c, mapped_a),
        _mean_squared_distance(p_c, mapped_b),
    )


def discovery_total(p_a: Points, p_b: Points, p_c: Points, phi_ca: TransformField,
                    phi_cb: TransformField) -> DiffValue:
    """L_d = L_ab + L_ca + L_cb"""
    l_ab, l_ca, l_cb = discovery_terms(p_a, p_b, p_c, phi_ca, phi_cb)
    return l_ab + l_ca + l_cb


def landmark_spread(points: Points) -> float:
    """Mean pairwise distance between the landmarks of one set."""
    if isinstance(points, DiffValue):
        points = points.value
    elif isinstance(points, LandmarkSet):
        points = points.points
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < 2:
        return 0.0
    return float(pdist(points).mean())
