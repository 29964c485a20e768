from abc import ABC, abstractmethod
import uuid
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractError, DimensionError
from .settings import Settings


ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]


def as_array(data: Any) -> np.ndarray:
    """Coerce ``data`` to a C-contiguous array of the working dtype."""
    array = np.asarray(data, dtype=Settings.dtype)
    if not array.flags.c_contiguous:
        array = array.copy()
    return array


def as_tensor(value: ArrayLike) -> "Tensor":
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes numpy broadcast to reach ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function(ABC):
    """Base class for every node of the autodiff graph.

    A Function instance records the operation that produced one tensor: its
    input tensors, its non-tensor attributes and whatever the forward pass
    saved for the backward pass.
    """

    op_name: Optional[str] = None

    def __init__(self, *inputs: "Tensor", **attrs):
        self.unique_id = str(uuid.uuid4())
        self.inputs: Tuple["Tensor", ...] = inputs
        self.attrs: Dict[str, Any] = attrs
        self.saved: Dict[str, Any] = {}

    @abstractmethod
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        """Compute the output array from the input arrays."""
        pass

    @abstractmethod
    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        """Return one gradient (or None) per input, given the output gradient."""
        pass

    def save(self, **values):
        self.saved.update(values)

    @classmethod
    def apply(cls, *inputs: ArrayLike, **attrs) -> "Tensor":
        tensors = tuple(as_tensor(value) for value in inputs)
        fn = cls(*tensors, **attrs)
        data = fn.forward(*(tensor.data for tensor in tensors))
        requires_grad = Settings.grad_enabled and any(t.requires_grad for t in tensors)
        return Tensor(data, requires_grad=requires_grad, _node=fn if requires_grad else None)

    def __str__(self):
        return self.op_name or self.__class__.__name__

    def __repr__(self):
        return self.__str__()


class Tensor:
    """An n-dimensional float array that can take part in reverse-mode autodiff."""

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 name: Optional[str] = None, _node: Optional[Function] = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = as_array(data)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node = _node
        self.name = name
        self._retain = False

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def retain_grad(self):
        self._retain = True
        return self

    def backward(self, grad: Optional[np.ndarray] = None):
        backward(self, grad)

    # Operators delegate to scanet.ops so every path records a graph node.
    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return ops.scale(self, other)
        return ops.mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise ContractError("only division by a Python scalar is supported")
        return ops.scale(self, 1.0 / other)

    def __neg__(self):
        return ops.neg(self)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def __repr__(self):
        grad_flag = ", requires_grad=True" if self.requires_grad else ""
        origin = f", node={self.node}" if self.node is not None else ""
        return f"Tensor(shape={self.shape}{grad_flag}{origin})"

    def inspect_graph(self, visited=None, indent=0):
        """Recursively print the graph that produced this tensor."""
        if visited is None:
            visited = set()
        label = self.name or ("leaf" if self.node is None else str(self.node))
        if id(self) in visited:
            print(f"{'  ' * indent}{label} {self.shape} (seen)")
            return
        visited.add(id(self))
        node_id = f" [{self.node.unique_id[:8]}]" if self.node is not None else ""
        print(f"{'  ' * indent}{label} {self.shape}{node_id}")
        if self.node is not None:
            for tensor in self.node.inputs:
                tensor.inspect_graph(visited, indent + 1)


class Parameter(Tensor):
    """A leaf tensor that is always trainable."""

    def __init__(self, data: ArrayLike, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, name=name)


def _topological_order(root: Tensor) -> List[Tensor]:
    """Tensors reachable from ``root`` with inputs listed before their outputs."""
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in tensor.node.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor, grad: Optional[np.ndarray] = None):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable trainable leaf.

    Gradients accumulate across calls; call ``zero_grad`` between steps.
    """
    if not loss.requires_grad:
        raise ContractError("loss is not connected to any tensor with requires_grad")
    if grad is None:
        if loss.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
        grad = np.ones_like(loss.data)
    else:
        grad = np.asarray(grad, dtype=loss.data.dtype)
        if grad.shape != loss.shape:
            raise DimensionError(f"seed gradient shape {grad.shape} does not match {loss.shape}")

    pending: Dict[int, np.ndarray] = {id(loss): grad}
    for tensor in reversed(_topological_order(loss)):
        upstream = pending.pop(id(tensor), None)
        if upstream is None:
            continue
        if tensor.node is None or tensor._retain:
            upstream = upstream.astype(tensor.data.dtype, copy=False)
            tensor.grad = upstream.copy() if tensor.grad is None else tensor.grad + upstream
        if tensor.node is None:
            continue
        input_grads = tensor.node.backward(upstream)
        for parent, parent_grad in zip(tensor.node.inputs, input_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = parent_grad if key not in pending else pending[key] + parent_grad


from . import ops  # noqa: E402  (operators above resolve through this module)
