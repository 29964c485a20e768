"""
Simple registries for SCANet - a dictionary mapping names to classes.
Differentiable primitives register under their op name, models under their variant.
"""

from typing import Dict, Type

OP_REGISTRY: Dict[str, Type] = {}
MODEL_REGISTRY: Dict[str, Type] = {}


def register_op(op_class: Type) -> Type:
    """Register a Function subclass under ``op_class.op_name``."""
    name = getattr(op_class, "op_name", None) or op_class.__name__.lower()
    OP_REGISTRY[name] = op_class
    return op_class


def register_model(variant: str):
    """Decorator registering a model class for ``build_model``."""
    def decorator(model_class: Type) -> Type:
        MODEL_REGISTRY[variant] = model_class
        model_class.variant = variant
        return model_class
    return decorator
