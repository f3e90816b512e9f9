"""Differentiable primitives.

Each function computes the forward value with numpy and records the adjoint
rule on the operands' tape. Elementwise primitives broadcast like numpy and
reduce their adjoints back to each operand's shape.
"""

from itertools import product
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.autodiff.tape import DiffValue, Tape
from src.errors import ShapeMismatchError
from src.fields.grid import Grid
from src.fields.sampling import stencil_from_world

Operand = Union[DiffValue, np.ndarray, float, int]


def _tape_of(*operands, tape: Optional[Tape] = None) -> Tape:
    for op in operands:
        if isinstance(op, DiffValue):
            return op.tape
    if tape is None:
        raise ShapeMismatchError("at least one operand must be a DiffValue")
    return tape


def _lift(tape: Tape, x: Operand, like: Optional[DiffValue] = None) -> DiffValue:
    if isinstance(x, DiffValue):
        return x
    dtype = like.value.dtype if like is not None else None
    return tape.constant(np.asarray(x, dtype=dtype))


def _binary(a: Operand, b: Operand, tape: Optional[Tape]) -> Tuple[DiffValue, DiffValue]:
    tape = _tape_of(a, b, tape=tape)
    like = a if isinstance(a, DiffValue) else b
    a, b = _lift(tape, a, like), _lift(tape, b, like)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeMismatchError(f"cannot broadcast {a.shape} with {b.shape}") from exc
    return a, b


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Operand, b: Operand, tape: Optional[Tape] = None) -> DiffValue:
    a, b = _binary(a, b, tape)
    return a.tape.record(a.value + b.value, (a, b),
                         lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Operand, b: Operand, tape: Optional[Tape] = None) -> DiffValue:
    a, b = _binary(a, b, tape)
    return a.tape.record(a.value - b.value, (a, b),
                         lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Operand, b: Operand, tape: Optional[Tape] = None) -> DiffValue:
    a, b = _binary(a, b, tape)
    return a.tape.record(a.value * b.value, (a, b),
                         lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def div(a: Operand, b: Operand, tape: Optional[Tape] = None) -> DiffValue:
    a, b = _binary(a, b, tape)
    out = a.value / b.value
    return a.tape.record(out, (a, b),
                         lambda g: (_unbroadcast(g / b.value, a.shape),
                                    _unbroadcast(-g * out / b.value, b.shape)))


def neg(x: DiffValue) -> DiffValue:
    return x.tape.record(-x.value, (x,), lambda g: (-g,))


def square(x: DiffValue) -> DiffValue:
    return x.tape.record(x.value * x.value, (x,), lambda g: (2.0 * x.value * g,))


def exp(x: DiffValue) -> DiffValue:
    out = np.exp(x.value)
    return x.tape.record(out, (x,), lambda g: (g * out,))


def tanh(x: DiffValue) -> DiffValue:
    out = np.tanh(x.value)
    return x.tape.record(out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x: DiffValue) -> DiffValue:
    mask = x.value > 0
    return x.tape.record(np.where(mask, x.value, 0.0).astype(x.value.dtype), (x,), lambda g: (g * mask,))


def maximum(x: DiffValue, floor: float) -> DiffValue:
    """Elementwise max against a constant; gradient passes where x > floor."""
    mask = x.value > floor
    out = np.where(mask, x.value, floor).astype(x.value.dtype)
    return x.tape.record(out, (x,), lambda g: (g * mask,))


def _expand_reduced(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(np.reshape(g, (1,) * len(shape)), shape)
    axes = (axis,) if np.isscalar(axis) else tuple(axis)
    axes = tuple(a % len(shape) for a in axes)
    if not keepdims:
        for a in sorted(axes):
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape)


def sum(x: DiffValue, axis=None, keepdims: bool = False) -> DiffValue:  # noqa: A001
    out = np.sum(x.value, axis=axis, keepdims=keepdims)
    return x.tape.record(np.asarray(out), (x,),
                         lambda g: (np.array(_expand_reduced(g, x.shape, axis, keepdims)),))


def mean(x: DiffValue, axis=None, keepdims: bool = False) -> DiffValue:
    out = np.mean(x.value, axis=axis, keepdims=keepdims)
    count = x.value.size / max(np.asarray(out).size, 1)
    return x.tape.record(np.asarray(out), (x,),
                         lambda g: (np.array(_expand_reduced(g, x.shape, axis, keepdims)) / count,))


def squared_norm(x: DiffValue, axis=None, keepdims: bool = False) -> DiffValue:
    """Sum of squares over ``axis`` (all entries when None)."""
    out = np.sum(x.value * x.value, axis=axis, keepdims=keepdims)
    return x.tape.record(np.asarray(out), (x,),
                         lambda g: (2.0 * x.value * _expand_reduced(g, x.shape, axis, keepdims),))


def reshape(x: DiffValue, shape: tuple) -> DiffValue:
    try:
        out = np.reshape(x.value, shape)
    except ValueError as exc:
        raise ShapeMismatchError(f"cannot reshape {x.shape} to {shape}") from exc
    return x.tape.record(out, (x,), lambda g: (np.reshape(g, x.shape),))


def transpose(x: DiffValue, axes: Optional[Sequence[int]] = None) -> DiffValue:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return x.tape.record(np.transpose(x.value, axes), (x,), lambda g: (np.transpose(g, inverse),))


def matmul(a: Operand, b: Operand, tape: Optional[Tape] = None) -> DiffValue:
    tape = _tape_of(a, b, tape=tape)
    like = a if isinstance(a, DiffValue) else b
    a, b = _lift(tape, a, like), _lift(tape, b, like)
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul shapes {a.shape} and {b.shape} do not align")

    def vjp(g):
        if b.ndim == 1:
            return np.outer(g, b.value), a.value.T @ g
        return g @ b.value.T, a.value.T @ g

    return tape.record(a.value @ b.value, (a, b), vjp)


def gather(x: DiffValue, indices, axis: int = 0) -> DiffValue:
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim > 1:
        raise ShapeMismatchError("gather takes a scalar or 1-D index array")
    if indices.size and (indices.min() < -x.shape[axis] or indices.max() >= x.shape[axis]):
        raise ShapeMismatchError(f"gather index out of range for axis of length {x.shape[axis]}")

    def vjp(g):
        grad = np.zeros_like(x.value)
        moved = np.moveaxis(grad, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0) if indices.ndim else g)
        return (grad,)

    return x.tape.record(np.take(x.value, indices, axis=axis), (x,), vjp)


def index_row(x: DiffValue, index: int) -> DiffValue:
    """Row ``index`` of x (one landmark of an (N, dim) set)."""
    return gather(x, int(index), axis=0)


def concat(values: Sequence[DiffValue], axis: int = 0) -> DiffValue:
    if not values:
        raise ShapeMismatchError("concat needs at least one operand")
    tape = values[0].tape
    try:
        out = np.concatenate([v.value for v in values], axis=axis)
    except ValueError as exc:
        raise ShapeMismatchError(f"cannot concatenate shapes {[v.shape for v in values]}") from exc
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]
    return tape.record(out, tuple(values), lambda g: tuple(np.split(g, bounds, axis=axis)))


def _as_tuple(value, n: int) -> Tuple[int, ...]:
    return (int(value),) * n if np.isscalar(value) else tuple(int(v) for v in value)


def conv(x: DiffValue, weight: DiffValue, stride=1, padding=0) -> DiffValue:
    """N-d cross-correlation with zero padding.

    x: (C_in, *spatial), weight: (C_out, C_in, *kernel) -> (C_out, *out_spatial).
    """
    spatial = x.ndim - 1
    if weight.ndim != spatial + 2 or weight.shape[1] != x.shape[0]:
        raise ShapeMismatchError(f"conv weight {weight.shape} does not fit input {x.shape}")
    stride = _as_tuple(stride, spatial)
    padding = _as_tuple(padding, spatial)
    kernel = weight.shape[2:]
    if any(s < 1 for s in stride):
        raise ShapeMismatchError(f"conv stride must be >= 1, got {stride}")

    padded = np.pad(x.value, ((0, 0),) + tuple((p, p) for p in padding))
    out_shape = tuple((n + 2 * p - k) // s + 1 for n, p, k, s in zip(x.shape[1:], padding, kernel, stride))
    if any(o < 1 for o in out_shape):
        raise ShapeMismatchError(f"conv output would be empty for input {x.shape} and kernel {kernel}")

    offsets = list(product(*(range(k) for k in kernel)))

    def window(offset):
        return (slice(None),) + tuple(
            slice(o, o + s * (n - 1) + 1, s) for o, s, n in zip(offset, stride, out_shape)
        )

    cols = np.stack([padded[window(o)] for o in offsets], axis=1)  # (C_in, K, *out)
    cols = cols.reshape(x.shape[0] * len(offsets), -1)
    w_mat = weight.value.reshape(weight.shape[0], -1)
    out = (w_mat @ cols).reshape((weight.shape[0],) + out_shape)

    def vjp(g):
        g_mat = g.reshape(weight.shape[0], -1)
        grad_w = (g_mat @ cols.T).reshape(weight.shape)
        grad_cols = (w_mat.T @ g_mat).reshape((x.shape[0], len(offsets)) + out_shape)
        grad_padded = np.zeros_like(padded)
        for k, offset in enumerate(offsets):
            grad_padded[window(offset)] += grad_cols[:, k]
        inner = (slice(None),) + tuple(slice(p, p + n) for p, n in zip(padding, x.shape[1:]))
        return grad_padded[inner], grad_w

    return x.tape.record(out, (x, weight), vjp)


def sample(values: DiffValue, coords: DiffValue, grid: Grid) -> DiffValue:
    """Multilinear sampling of node values (size, C) at world coords (M, dim) -> (M, C).

    Differentiable with respect to both the node values and the coordinates;
    coordinates outside the grid are clamped and get zero gradient along the
    clamped axes.
    """
    tape = _tape_of(values, coords)
    values, coords = _lift(tape, values), _lift(tape, coords)
    if values.ndim != 2 or values.shape[0] != grid.size:
        raise ShapeMismatchError(f"sample values must be ({grid.size}, C), got {values.shape}")
    if coords.ndim != 2 or coords.shape[1] != grid.dim:
        raise ShapeMismatchError(f"sample coords must be (M, {grid.dim}), got {coords.shape}")
    stencil = stencil_from_world(grid, coords.value)
    out = stencil.apply(values.value)

    def vjp(g):
        grad_values = None
        grad_coords = None
        if values.requires_grad:
            grad_values = np.zeros_like(values.value)
            np.add.at(grad_values, stencil.indices, stencil.weights[..., None] * g[:, None, :])
        if coords.requires_grad:
            grad_coords = np.einsum("mcd,mc->md", stencil.apply_gradient(values.value), g)
        return grad_values, grad_coords

    return tape.record(out.astype(values.value.dtype, copy=False), (values, coords), vjp)


PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "exp": exp,
    "tanh": tanh,
    "relu": relu,
    "sum": sum,
    "mean": mean,
    "squared-norm": squared_norm,
    "matmul": matmul,
    "convolution": conv,
    "multilinear-sample": sample,
    "gather": gather,
    "concat": concat,
    "index-row": index_row,
    "square": square,
    "maximum": maximum,
    "reshape": reshape,
    "transpose": transpose,
}


def record(primitive, inputs: Sequence, tape: Optional[Tape] = None, **kwargs) -> DiffValue:
    """Apply a primitive by name; raw array inputs become requires-grad leaves."""
    fn = PRIMITIVES.get(primitive) if isinstance(primitive, str) else primitive
    if fn is None:
        raise ShapeMismatchError(f"unknown primitive {primitive!r}; known: {sorted(PRIMITIVES)}")
    if tape is None:
        tape = next((x.tape for x in inputs if isinstance(x, DiffValue)), None)
    if tape is None:
        tape = Tape()
    args = [x if isinstance(x, DiffValue) else tape.leaf(x, requires_grad=True) for x in inputs]
    if fn is concat:
        return fn(args, **kwargs)
    return fn(*args, **kwargs)
