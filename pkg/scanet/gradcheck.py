"""
Finite-difference gradient verification.

``grad_check`` compares the analytic gradients of a scalar function with
central differences. ``run_gradcheck_suite`` applies it to every registered
primitive plus composite blocks and the tiny end-to-end model.
"""

from contextlib import contextmanager
from dataclasses import dataclass
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import ops
from .base import Tensor, backward
from .errors import ArgumentError, ContractError
from .settings import no_grad, precision
from .simple_registry import OP_REGISTRY

_logger = logging.getLogger(__name__)

RELATIVE_FLOOR = 1e-6
KINK_TOLERANCE = 1e-2


@dataclass
class GradCheckStats:
    max_relative_error: float
    checked: int
    skipped: int


def _relative(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), RELATIVE_FLOOR)


def grad_check_stats(f: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-3,
                     dtype=np.float64, max_elements_per_tensor: Optional[int] = None, seed: int = 0,
                     skip_kinks: bool = False) -> GradCheckStats:
    """Like ``grad_check`` but also reports how many elements were checked and skipped.

    With ``skip_kinks`` an element is skipped when its forward and backward
    one-sided differences disagree, which marks a relu/max kink inside the
    perturbation interval rather than a wrong analytic gradient.
    """
    if eps <= 0:
        raise ArgumentError(f"eps must be positive, got {eps}")
    saved = [(t.data, t.requires_grad, t.grad) for t in inputs]
    rng = np.random.default_rng(seed)
    worst, checked, skipped = 0.0, 0, 0
    try:
        with precision(dtype):
            for t in inputs:
                t.data = np.array(t.data, dtype=dtype)
                t.requires_grad = True
                t.grad = None
            loss = f(*inputs)
            if loss.size != 1:
                raise ContractError(f"grad_check needs a scalar function, got output shape {loss.shape}")
            base = loss.item()
            backward(loss)
            analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

            with no_grad():
                for position, (t, grad) in enumerate(zip(inputs, analytic)):
                    flat = t.data.reshape(-1)
                    if max_elements_per_tensor is not None and flat.size > max_elements_per_tensor:
                        indices = rng.choice(flat.size, size=max_elements_per_tensor, replace=False)
                    else:
                        indices = np.arange(flat.size)
                    for index in indices:
                        original = flat[index]
                        flat[index] = original + eps
                        plus = f(*inputs).item()
                        flat[index] = original - eps
                        minus = f(*inputs).item()
                        flat[index] = original
                        if skip_kinks and _relative((plus - base) / eps, (base - minus) / eps) > KINK_TOLERANCE:
                            skipped += 1
                            continue
                        numeric = (plus - minus) / (2.0 * eps)
                        error = _relative(float(grad.reshape(-1)[index]), numeric)
                        if error > worst:
                            _logger.debug(f"input {position} element {int(index)}: analytic "
                                          f"{float(grad.reshape(-1)[index]):.6e} numeric {numeric:.6e}")
                        worst = max(worst, error)
                        checked += 1
    finally:
        for t, (data, requires_grad, grad) in zip(inputs, saved):
            t.data, t.requires_grad, t.grad = data, requires_grad, grad
    return GradCheckStats(max_relative_error=worst, checked=checked, skipped=skipped)


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-3, dtype=np.float64,
               max_elements_per_tensor: Optional[int] = None, seed: int = 0, skip_kinks: bool = False) -> float:
    """Max relative error |a - n| / max(|a|, |n|, 1e-6) between analytic and central-difference gradients.

    ``f`` maps the input tensors to a scalar tensor. Inputs are evaluated in
    ``dtype`` and restored afterwards.
    """
    return grad_check_stats(f, inputs, eps, dtype, max_elements_per_tensor, seed, skip_kinks).max_relative_error


@contextmanager
def inject_fault(op_name: str, factor: float = 1.5):
    """Scale the gradients returned by one op's backward, for negative-control runs."""
    if op_name not in OP_REGISTRY:
        raise ArgumentError(f"unknown op '{op_name}', choose from {sorted(OP_REGISTRY)}")
    op_class = OP_REGISTRY[op_name]
    original = op_class.backward

    def faulty_backward(self, grad):
        return tuple(None if g is None else g * factor for g in original(self, grad))

    op_class.backward = faulty_backward
    _logger.warning(f"Fault injected into the backward pass of '{op_name}'")
    try:
        yield
    finally:
        op_class.backward = original


# Each case builds (f, inputs, options) from a seeded generator, inside the check precision.

@dataclass
class GradCase:
    name: str
    build: Callable[[np.random.Generator], Tuple[Callable[..., Tensor], List[Tensor]]]
    eps: float = 1e-5
    max_elements_per_tensor: Optional[int] = None
    skip_kinks: bool = False


def _param(rng: np.random.Generator, *shape) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _projection(rng: np.random.Generator, shape) -> Callable[[Tensor], Tensor]:
    """Fixed random weighting so every output element matters to the scalar loss."""
    weights = Tensor(rng.standard_normal(shape))
    return lambda out: ops.sum(ops.mul(out, weights))


def _unary(op: Callable[[Tensor], Tensor], shape, out_shape=None, values=None):
    def build(rng):
        x = Tensor(values(rng) if values else rng.standard_normal(shape), requires_grad=True)
        project = _projection(rng, out_shape or shape)
        return (lambda t: project(op(t))), [x]
    return build


def _binary(op: Callable[[Tensor, Tensor], Tensor], shape_a, shape_b, out_shape):
    def build(rng):
        a, b = _param(rng, *shape_a), _param(rng, *shape_b)
        project = _projection(rng, out_shape)
        return (lambda x, y: project(op(x, y))), [a, b]
    return build


def _away_from_zero(shape):
    def values(rng):
        return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.1, 1.0, size=shape)
    return values


def _distinct(shape):
    def values(rng):
        return (rng.permutation(int(np.prod(shape))) * 0.1).reshape(shape)
    return values


def _build_conv(rng):
    images, kernels, bias = _param(rng, 2, 3, 6, 5), _param(rng, 4, 3, 3, 3), _param(rng, 4)
    project = _projection(rng, (2, 4, 3, 3))
    return (lambda x, k, b: project(ops.conv2d(x, k, b, stride=2, padding=1))), [images, kernels, bias]


def _build_layer_norm(rng):
    x, gain, bias = _param(rng, 3, 4, 6), _param(rng, 6), _param(rng, 6)
    project = _projection(rng, (3, 4, 6))
    return (lambda t, g, b: project(ops.layer_norm(t, g, b))), [x, gain, bias]


def _build_group_norm(rng):
    x, gain, bias = _param(rng, 2, 4, 3, 3), _param(rng, 4), _param(rng, 4)
    project = _projection(rng, (2, 4, 3, 3))
    return (lambda t, g, b: project(ops.group_norm(t, g, b, groups=2))), [x, gain, bias]


def _build_cross_entropy(rng):
    logits = _param(rng, 5, 2)
    labels = [0, 1, 1, 0, 1]
    return (lambda z: ops.cross_entropy(ops.softmax(z, axis=-1), labels)), [logits]


def _build_dropout(rng):
    x = _param(rng, 4, 6)
    project = _projection(rng, (4, 6))
    return (lambda t: project(ops.dropout(t, 0.3, np.random.default_rng(11)))), [x]


def _build_attention(rng):
    from .nn import MultiHeadSelfAttention
    block = MultiHeadSelfAttention(8, 2, rng)
    x = _param(rng, 2, 4, 8)
    project = _projection(rng, (2, 4, 8))
    return (lambda t, *params: project(block(t)[0])), [x] + block.parameters()


def _build_mlp(rng):
    from .nn import Mlp
    block = Mlp(6, 12, rng)
    x = _param(rng, 3, 6)
    project = _projection(rng, (3, 6))
    return (lambda t, *params: project(block(t))), [x] + block.parameters()


def _build_tiny_model(rng):
    from .config import expand_preset
    from .model import build_model
    config, _ = expand_preset("tiny")
    model = build_model(config, seed=int(rng.integers(1 << 30)))
    volumes = Tensor(rng.uniform(0.0, 1.0, size=(2,) + config.volume_shape))
    labels = [0, 1]
    return (lambda *params: ops.cross_entropy(model(volumes)[0], labels)), model.parameters()


def gradcheck_cases() -> List[GradCase]:
    return [
        GradCase("add", _binary(ops.add, (3, 4), (4,), (3, 4))),
        GradCase("sub", _binary(ops.sub, (3, 1), (3, 4), (3, 4))),
        GradCase("mul", _binary(ops.mul, (2, 3, 4), (3, 1), (2, 3, 4))),
        GradCase("neg", _unary(ops.neg, (3, 4))),
        GradCase("scale", _unary(lambda t: ops.scale(t, -2.5), (3, 4))),
        GradCase("relu", _unary(ops.relu, (4, 5), values=_away_from_zero((4, 5))), skip_kinks=True),
        GradCase("reshape", _unary(lambda t: ops.reshape(t, (6, 2)), (3, 4), (6, 2))),
        GradCase("transpose", _unary(lambda t: ops.transpose(t, (2, 0, 1)), (2, 3, 4), (4, 2, 3))),
        GradCase("sum", _unary(lambda t: ops.sum(t, axis=1), (3, 4, 2), (3, 2))),
        GradCase("mean", _unary(lambda t: ops.mean(t, axis=(0, 2), keepdims=True), (3, 4, 2), (1, 4, 1))),
        GradCase("take", _unary(lambda t: ops.take(t, [0, 2, 2, 1], axis=1), (2, 3), (2, 4))),
        GradCase("dropout", _build_dropout),
        GradCase("matmul", _binary(ops.matmul, (2, 3, 4), (4, 5), (2, 3, 5))),
        GradCase("conv2d", _build_conv),
        GradCase("max_pool2d", _unary(lambda t: ops.max_pool2d(t, 2), (2, 2, 4, 4), (2, 2, 2, 2),
                                      values=_distinct((2, 2, 4, 4))), skip_kinks=True),
        GradCase("softmax", _unary(lambda t: ops.softmax(t, axis=-1), (3, 5))),
        GradCase("layer_norm", _build_layer_norm),
        GradCase("group_norm", _build_group_norm),
        GradCase("cross_entropy", _build_cross_entropy),
        GradCase("attention", _build_attention),
        GradCase("mlp", _build_mlp, skip_kinks=True),
        GradCase("tiny_model", _build_tiny_model, eps=1e-6, max_elements_per_tensor=4, skip_kinks=True),
    ]


@dataclass
class GradCheckResult:
    name: str
    max_relative_error: float
    tolerance: float
    checked: int
    skipped: int

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_relative_error <= self.tolerance


def run_gradcheck_suite(tolerance: float = 1e-3, names: Optional[Sequence[str]] = None,
                        seed: int = 0) -> List[GradCheckResult]:
    cases = gradcheck_cases()
    if names is not None:
        unknown = set(names) - {case.name for case in cases}
        if unknown:
            raise ArgumentError(f"unknown gradient check cases: {sorted(unknown)}")
        cases = [case for case in cases if case.name in names]
    results = []
    for case in cases:
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            f, inputs = case.build(rng)
        stats = grad_check_stats(f, inputs, eps=case.eps, dtype=np.float64,
                                 max_elements_per_tensor=case.max_elements_per_tensor,
                                 seed=seed, skip_kinks=case.skip_kinks)
        result = GradCheckResult(case.name, stats.max_relative_error, tolerance, stats.checked, stats.skipped)
        _logger.debug(f"gradcheck {case.name}: max rel error {stats.max_relative_error:.3e} "
                      f"({stats.checked} checked, {stats.skipped} skipped at kinks)")
        results.append(result)
    return results


def format_gradcheck_table(results: Sequence[GradCheckResult]) -> str:
    width = max(len("case"), *(len(r.name) for r in results))
    lines = [f"{'case'.ljust(width)}  max_rel_error  checked  status"]
    for r in results:
        status = "pass" if r.passed else "fail"
        lines.append(f"{r.name.ljust(width)}  {r.max_relative_error:13.3e}  {r.checked:7d}  {status}")
    return "\n".join(lines)


def covered_ops() -> Dict[str, bool]:
    """Which registered primitives have a dedicated case."""
    names = {case.name for case in gradcheck_cases()}
    return {op_name: op_name in names for op_name in OP_REGISTRY}
