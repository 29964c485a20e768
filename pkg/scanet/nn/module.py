from abc import ABC, abstractmethod
from collections import OrderedDict
from typing import Dict, Iterator, List, Tuple, Union

import numpy as np

from ..base import Parameter
from ..errors import ConfigError, DimensionError


class Module(ABC):
    """Base class for every network component.

    Parameters and sub-modules assigned as attributes are registered in
    assignment order. That order is the canonical parameter order used by
    ``named_parameters``, the optimizer and checkpoints.
    """

    def __init__(self):
        object.__setattr__(self, "_children", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        children = self.__dict__.get("_children")
        if children is None:
            raise RuntimeError(f"{type(self).__name__}.__init__ must call super().__init__() "
                               f"before assigning '{name}'")
        if isinstance(value, (Parameter, Module)):
            children[name] = value
        elif name in children:
            del children[name]
        object.__setattr__(self, name, value)

    @abstractmethod
    def forward(self, *args, **kwargs):
        pass

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, child in self._children.items():
            full_name = f"{prefix}{name}"
            if isinstance(child, Parameter):
                yield full_name, child
            else:
                yield from child.named_parameters(prefix=f"{full_name}.")

    def parameters(self) -> List[Parameter]:
        return [param for _, param in self.named_parameters()]

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix.rstrip("."), self
        for name, child in self._children.items():
            if isinstance(child, Module):
                yield from child.named_modules(prefix=f"{prefix}{name}.")

    def num_parameters(self) -> int:
        return int(sum(param.size for param in self.parameters()))

    def zero_grad(self):
        for param in self.parameters():
            param.zero_grad()

    def train(self, mode: bool = True) -> "Module":
        for _, module in self.named_modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def astype(self, dtype) -> "Module":
        """Cast every parameter in place (float64 for verification runs)."""
        for param in self.parameters():
            param.data = param.data.astype(dtype)
            param.grad = None
        return self

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, np.copy(param.data)) for name, param in self.named_parameters())

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True):
        params = OrderedDict(self.named_parameters())
        missing = [name for name in params if name not in state]
        unexpected = [name for name in state if name not in params]
        if strict and (missing or unexpected):
            raise ConfigError(f"state does not match {type(self).__name__}: "
                              f"missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, param in params.items():
            if name not in state:
                continue
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise DimensionError(f"parameter '{name}' has shape {param.shape}, state holds {value.shape}")
            param.data = value.astype(param.dtype, copy=True)
            param.grad = None

    def extra_repr(self) -> str:
        return ""

    def __repr__(self):
        lines = [f"{type(self).__name__}({self.extra_repr()})"]
        for name, child in self._children.items():
            if isinstance(child, Module):
                child_lines = repr(child).splitlines()
                lines.append(f"  ({name}): {child_lines[0]}")
                lines.extend(f"  {line}" for line in child_lines[1:])
        return "\n".join(lines)


class ModuleList(Module):
    """An indexable list of sub-modules registered as "0", "1", ..."""

    def __init__(self, modules=()):
        super().__init__()
        self._items: List[Module] = []
        for module in modules:
            self.append(module)

    def append(self, module: Module):
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, index: Union[int, slice]):
        return self._items[index]

    def forward(self, *args, **kwargs):
        raise NotImplementedError("ModuleList is a container; iterate over it instead")
