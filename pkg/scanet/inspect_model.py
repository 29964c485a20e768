"""
Simple model inspection utilities for SCANet.
"""

import re
from typing import Dict, List, Type, Union

from .errors import ArgumentError
from .nn import Module
from .simple_registry import MODEL_REGISTRY, OP_REGISTRY


def parameter_table(model: Module) -> List[Dict]:
    """One row per parameter in checkpoint order."""
    return [{"name": name, "shape": tuple(param.shape), "count": int(param.size)}
            for name, param in model.named_parameters()]


def inspect_model(model: Module) -> None:
    """Print the parameters of a model with their shapes and counts."""
    rows = parameter_table(model)
    print(f"{model.__class__.__name__} ({getattr(model, 'variant', 'module')})")
    width = max((len(row["name"]) for row in rows), default=4)
    for row in rows:
        shape = "x".join(str(extent) for extent in row["shape"]) or "scalar"
        print(f"  {row['name'].ljust(width)}  {shape:>16}  {row['count']}")
    print(f"  total parameters: {model.num_parameters()}")


def inspect_op(op_or_class: Union[str, Type, object]) -> None:
    """Print basic information about a registered primitive, given by name, class or instance."""
    if isinstance(op_or_class, str):
        if op_or_class not in OP_REGISTRY:
            raise ArgumentError(f"unknown op '{op_or_class}', see `scanet inspect` for the registered ops")
        op_or_class = OP_REGISTRY[op_or_class]
    op_class = op_or_class if isinstance(op_or_class, type) else op_or_class.__class__
    print(f"{op_class.__name__} ({getattr(op_class, 'op_name', op_class.__name__.lower())})")
    doc = (op_class.__doc__ or "").strip().splitlines()
    if doc:
        print(f"  {doc[0]}")


def list_ops() -> List[str]:
    """Get list of all registered op names."""
    return sorted(OP_REGISTRY.keys())


def list_models() -> List[str]:
    return sorted(MODEL_REGISTRY.keys())


def search_ops(pattern: str) -> List[str]:
    """Search for ops matching a pattern (case-insensitive)."""
    regex = re.compile(pattern, re.IGNORECASE)
    return sorted([name for name in OP_REGISTRY.keys() if regex.search(name)])
