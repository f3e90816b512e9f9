"""Recorded computation tape for reverse-mode differentiation.

Every primitive appends one node to the tape holding its forward value, its
parent node ids and a vector-Jacobian product closure. Nodes are appended in
forward order, so walking the tape backwards from the output is a reverse
topological order: each node is visited once and adjoints from all paths
are summed before the node propagates them.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.errors import NumericError, ShapeMismatchError

Vjp = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class _Node:
    parents: Tuple[int, ...]
    vjp: Optional[Vjp]
    requires_grad: bool
    name: Optional[str] = None


class DiffValue:
    """A value recorded on a tape."""

    __slots__ = ("tape", "node", "value", "requires_grad", "name")

    def __init__(self, tape: "Tape", node: int, value: np.ndarray, requires_grad: bool, name: Optional[str] = None):
        self.tape = tape
        self.node = node
        self.value = value
        self.requires_grad = requires_grad
        self.name = name

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<DiffValue{label} #{self.node} shape={self.shape} requires_grad={self.requires_grad}>"

    def __hash__(self) -> int:
        return hash((id(self.tape), self.node))

    def __eq__(self, other) -> bool:
        return isinstance(other, DiffValue) and other.tape is self.tape and other.node == self.node

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    # Operator sugar; implementations live in primitives.
    def __add__(self, other):
        from src.autodiff import primitives as P
        return P.add(self, other)

    def __radd__(self, other):
        from src.autodiff import primitives as P
        return P.add(other, self, tape=self.tape)

    def __sub__(self, other):
        from src.autodiff import primitives as P
        return P.sub(self, other)

    def __rsub__(self, other):
        from src.autodiff import primitives as P
        return P.sub(other, self, tape=self.tape)

    def __mul__(self, other):
        from src.autodiff import primitives as P
        return P.mul(self, other)

    def __rmul__(self, other):
        from src.autodiff import primitives as P
        return P.mul(other, self, tape=self.tape)

    def __truediv__(self, other):
        from src.autodiff import primitives as P
        return P.div(self, other)

    def __rtruediv__(self, other):
        from src.autodiff import primitives as P
        return P.div(other, self, tape=self.tape)

    def __neg__(self):
        from src.autodiff import primitives as P
        return P.neg(self)

    def __matmul__(self, other):
        from src.autodiff import primitives as P
        return P.matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        from src.autodiff import primitives as P
        return P.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from src.autodiff import primitives as P
        return P.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from src.autodiff import primitives as P
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return P.reshape(self, shape)


class Gradients(Mapping):
    """Gradients of a scalar output keyed by leaf DiffValue."""

    def __init__(self, leaves: Dict[DiffValue, np.ndarray]):
        self._grads = leaves

    def __getitem__(self, leaf: DiffValue) -> np.ndarray:
        return self._grads[leaf]

    def __iter__(self) -> Iterator[DiffValue]:
        return iter(self._grads)

    def __len__(self) -> int:
        return len(self._grads)

    def by_name(self) -> Dict[str, np.ndarray]:
        return {leaf.name: grad for leaf, grad in self._grads.items() if leaf.name is not None}


@dataclass
class Tape:
    """Single-threaded recording of one computation."""

    nodes: List[_Node] = field(default_factory=list)
    leaves: List[DiffValue] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)

    def leaf(self, value, requires_grad: bool = False, name: Optional[str] = None) -> DiffValue:
        value = np.array(value, dtype=np.result_type(np.asarray(value).dtype, np.float32))
        self.nodes.append(_Node(parents=(), vjp=None, requires_grad=requires_grad, name=name))
        out = DiffValue(self, len(self.nodes) - 1, value, requires_grad, name)
        if requires_grad:
            self.leaves.append(out)
        return out

    def constant(self, value) -> DiffValue:
        return self.leaf(value, requires_grad=False)

    def record(self, value: np.ndarray, parents: Sequence[DiffValue], vjp: Vjp) -> DiffValue:
        for parent in parents:
            if parent.tape is not self:
                raise ShapeMismatchError("operands were recorded on different tapes")
        requires_grad = any(p.requires_grad for p in parents)
        self.nodes.append(_Node(
            parents=tuple(p.node for p in parents),
            vjp=vjp if requires_grad else None,
            requires_grad=requires_grad,
        ))
        return DiffValue(self, len(self.nodes) - 1, value, requires_grad)

    def backward(self, output: DiffValue) -> Gradients:
        return backward(output)


def backward(output: DiffValue) -> Gradients:
    """Gradients of a scalar output with respect to every requires-grad leaf.

    Leaves not connected to the output receive zeros.
    """
    if output.value.size != 1:
        raise ShapeMismatchError(f"backward needs a scalar output, got shape {output.shape}")
    if not np.all(np.isfinite(output.value)):
        raise NumericError(f"backward from a non-finite output ({output.value!r})")
    tape = output.tape
    adjoints: Dict[int, np.ndarray] = {output.node: np.ones_like(output.value)}

    for index in range(output.node, -1, -1):
        adjoint = adjoints.get(index)
        if adjoint is None:
            continue
        node = tape.nodes[index]
        if node.vjp is None:
            continue
        del adjoints[index]
        parent_grads = node.vjp(adjoint)
        for parent, grad in zip(node.parents, parent_grads):
            if grad is None or not tape.nodes[parent].requires_grad:
                continue
            if parent in adjoints:
                adjoints[parent] = adjoints[parent] + grad
            else:
                adjoints[parent] = grad

    grads = {}
    for leaf in tape.leaves:
        grad = adjoints.get(leaf.node)
        grads[leaf] = np.zeros_like(leaf.value) if grad is None else np.asarray(grad).reshape(leaf.shape)
    return Gradients(grads)
