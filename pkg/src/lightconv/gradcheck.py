"""Central-difference gradient oracle and the per-block check harness.

Each differentiable block exposes an explicit analytic backward pass;
:func:`check_module` compares it against central differences of the forward
pass for the input and every weight group. The check loss is a fixed
random-weighted sum of the outputs rather than a plain sum: several blocks
(channel softmax, the gated spatial unit) conserve the plain sum exactly,
which would make their true gradient identically zero and the comparison
meaningless noise. The weighting field is zero-centered and the reduction
uses exact summation, which keeps the loss magnitude small and the
central-difference round-off floor well below the tolerance; the field is
drawn once per check from the seeded generator, so results stay
reproducible.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .blocks import Block, make_block
from .tensor import Tensor

LOSS_DESCRIPTION = "exact sum of outputs weighted by a fixed random field in [-1, 1]"


def _weighted_loss(weight: np.ndarray, out: np.ndarray) -> float:
    # math.fsum is exact; plain-reduction noise would dominate the tiny
    # gradients flowing through softmax-normalized outputs
    return math.fsum((weight * out).ravel())


def numeric_gradient(f, theta, epsilon: float = 1e-6) -> np.ndarray:
    """Central differences (f(t + eps*e_i) - f(t - eps*e_i)) / (2*eps).

    ``f`` is a scalar-valued function of an array shaped like ``theta``;
    it is called with a working copy, never with ``theta`` itself.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    work = theta.copy()
    it = np.nditer(theta, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = work[idx]
        work[idx] = orig + epsilon
        f_plus = float(f(work))
        work[idx] = orig - epsilon
        f_minus = float(f(work))
        work[idx] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ValueError(f"non-finite function value near coordinate {idx}")
        grad[idx] = (f_plus - f_minus) / (2.0 * epsilon)
    return grad


def relative_error(analytic, numeric) -> float:
    """Max over elements of |a - n| / max(|a|, |n|, 1e-12)."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"gradient shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12)
    return float(np.max(np.abs(a - b) / denom))


@dataclass
class GradCheckReport:
    """Outcome of one analytic-vs-numeric gradient comparison."""

    target: str
    seed: int
    epsilon: float
    tolerance: float
    status: str                       # "ok" or "unsupported-mode"
    passed: bool
    max_relative_errors: dict[str, float] = field(default_factory=dict)
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "seed": self.seed,
            "epsilon": self.epsilon,
            "tolerance": self.tolerance,
            "status": self.status,
            "pass": self.passed,
            "max_relative_errors": dict(self.max_relative_errors),
            "loss": LOSS_DESCRIPTION,
            "detail": self.detail,
        }


def check_module(block, input_shape, seed: int, tolerance: float = 1e-5,
                 epsilon: float = 1e-6) -> GradCheckReport:
    """Gradient-check one block on a seeded random input.

    ``block`` may be a :class:`~lightconv.blocks.Block` instance or a kind
    name (instantiated with default hyperparameters and the same seed).
    Blocks in a non-differentiable configuration (hard gates, pure routing)
    yield an explicit ``unsupported-mode`` report instead of a silent pass.
    """
    input_shape = tuple(int(d) for d in input_shape)
    if isinstance(block, str):
        block = make_block(block, [input_shape], {}, seed=seed)
    if not isinstance(block, Block):
        raise TypeError(f"expected a Block or kind name, got {type(block)!r}")

    if not block.differentiable:
        return GradCheckReport(
            target=block.kind, seed=seed, epsilon=epsilon, tolerance=tolerance,
            status="unsupported-mode", passed=False,
            detail=f"kind '{block.kind}' has no usable gradient in this configuration "
                   "(non-differentiable mode requested)",
        )

    rng = np.random.default_rng(seed)
    # the input scale sets the signal-to-roundoff ratio of the check: with
    # unit inputs the encoder gradients of the upsampler sit below the
    # central-difference floor at epsilon = 1e-6
    x = rng.uniform(-3.0, 3.0, size=input_shape)
    x_tensor = Tensor(x)

    out, cache = block.forward_with_cache(x_tensor)
    weight = rng.uniform(-1.0, 1.0, size=out.shape)
    analytic_gx, analytic_params = block.backward(weight, cache)

    def loss_with_input(arr):
        return _weighted_loss(weight, block.forward(Tensor(arr)).data)

    errors = {"input": relative_error(analytic_gx, numeric_gradient(loss_with_input, x, epsilon))}

    for name, arr in block.param_groups().items():
        saved = arr.copy()

        def loss_with_param(vec, _arr=arr):
            _arr[...] = vec
            return _weighted_loss(weight, block.forward(x_tensor).data)

        try:
            numeric = numeric_gradient(loss_with_param, saved, epsilon)
        finally:
            arr[...] = saved
        errors[name] = relative_error(analytic_params[name], numeric)

    worst = max(errors.values())
    return GradCheckReport(
        target=block.kind, seed=seed, epsilon=epsilon, tolerance=tolerance,
        status="ok", passed=bool(worst < tolerance), max_relative_errors=errors,
    )
