"""Central finite-difference verification of recorded gradients."""

from typing import Callable, Dict, List, Mapping, Optional

import numpy as np
from pydantic import BaseModel, Field

from src.autodiff.tape import DiffValue, Tape, backward
from src.errors import GradientCheckError

ScalarFn = Callable[[Tape, Dict[str, DiffValue]], DiffValue]


class ParameterError(BaseModel):
    name: str
    max_relative_error: float = Field(ge=0.0)
    worst_index: List[int] = Field(default_factory=list)
    coordinates_checked: int = 0


class GradientReport(BaseModel):
    max_relative_error: float = Field(ge=0.0)
    per_parameter: List[ParameterError] = Field(default_factory=list)

    def passes(self, tolerance: float) -> bool:
        return self.max_relative_error <= tolerance


def _evaluate(fn: ScalarFn, point: Mapping[str, np.ndarray]) -> float:
    tape = Tape()
    params = {name: tape.leaf(value, requires_grad=False, name=name) for name, value in point.items()}
    out = fn(tape, params)
    value = np.asarray(out.value)
    if value.size != 1 or not np.all(np.isfinite(value)):
        raise GradientCheckError(f"function returned a non-finite or non-scalar value: {value!r}")
    return float(value)


def analytic_gradients(fn: ScalarFn, point: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    tape = Tape()
    params = {
        name: tape.leaf(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        for name, value in point.items()
    }
    out = fn(tape, params)
    if not np.all(np.isfinite(out.value)):
        raise GradientCheckError(f"function returned a non-finite value: {out.value!r}")
    grads = backward(out)
    return {name: grads[leaf] for name, leaf in params.items()}


def check_gradients(
    fn: ScalarFn,
    point: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    coordinates_per_parameter: Optional[int] = None,
    seed: int = 0,
) -> GradientReport:
    """Compare backward() gradients with (f(x+eps) - f(x-eps)) / (2 eps).

    Relative error per coordinate uses max(|analytic|, |numeric|, 1e-8) as the
    denominator. ``coordinates_per_parameter`` limits the check to a random
    subset of coordinates for large parameters.
    """
    if not eps > 0:
        raise GradientCheckError(f"eps must be > 0, got {eps}")
    point = {name: np.array(value, dtype=np.float64) for name, value in point.items()}
    analytic = analytic_gradients(fn, point)
    rng = np.random.default_rng(seed)

    per_parameter = []
    for name, value in point.items():
        flat_count = value.size
        coords = np.arange(flat_count)
        if coordinates_per_parameter is not None and flat_count > coordinates_per_parameter:
            coords = np.sort(rng.choice(flat_count, size=coordinates_per_parameter, replace=False))

        worst, worst_index = 0.0, []
        for flat in coords:
            index = np.unravel_index(flat, value.shape) if value.ndim else ()
            shifted = dict(point)
            plus = value.copy()
            plus[index] += eps
            shifted[name] = plus
            f_plus = _evaluate(fn, shifted)
            minus = value.copy()
            minus[index] -= eps
            shifted[name] = minus
            f_minus = _evaluate(fn, shifted)

            numeric = (f_plus - f_minus) / (2.0 * eps)
            exact = float(analytic[name][index])
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
            if error > worst:
                worst, worst_index = error, [int(i) for i in np.atleast_1d(index)]
        per_parameter.append(ParameterError(
            name=name, max_relative_error=worst, worst_index=worst_index, coordinates_checked=len(coords),
        ))

    return GradientReport(
        max_relative_error=max((p.max_relative_error for p in per_parameter), default=0.0),
        per_parameter=per_parameter,
    )
