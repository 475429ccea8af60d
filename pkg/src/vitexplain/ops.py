"""Dense-array kernels used by the transformer, each with an explicit backward.

Arrays are plain numpy ndarrays in row-major (C) order. Precision is the
caller's choice: float32 for training and benchmarks, float64 for gradient
checks. Every function is pure; nothing here mutates its inputs.

Axis conventions, used everywhere in this package:
  * matmul contracts the last axis of ``a`` with the first of ``b`` (2-D only;
    batched products go through numpy broadcasting at the call site).
  * softmax / layernorm normalize along one explicit axis (default: last).
  * bias adds broadcast over the last axis only.
"""

from __future__ import annotations

import numpy as np

# tanh-approximation GELU:
#   gelu(x) = 0.5 * x * (1 + tanh(sqrt(2/pi) * (x + GELU_CUBIC * x^3)))
GELU_SCALE = 0.7978845608028654  # sqrt(2/pi)
GELU_CUBIC = 0.044715


class ShapeMismatchError(ValueError):
    """Raised when operand shapes cannot be combined."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatchError(msg)


# ---------------------------------------------------------------- matmul


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of a 2-D ``a`` (m x k) and ``b`` (k x n)."""
    _require(a.ndim == 2 and b.ndim == 2,
             f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    _require(a.shape[1] == b.shape[0],
             f"matmul inner extents differ: {a.shape} x {b.shape}")
    return a @ b


def matmul_backward(a: np.ndarray, b: np.ndarray,
                    grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``matmul(a, b)`` w.r.t. both operands.

    grad_a = grad_out @ b.T, grad_b = a.T @ grad_out.
    """
    _require(grad_out.shape == (a.shape[0], b.shape[1]),
             f"upstream gradient {grad_out.shape} does not match product shape "
             f"({a.shape[0]}, {b.shape[1]})")
    return grad_out @ b.T, a.T @ grad_out


# ---------------------------------------------------------------- softmax


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Shift-invariant softmax along ``axis`` (max subtracted before exp)."""
    _require(-x.ndim <= axis < x.ndim,
             f"softmax axis {axis} invalid for shape {x.shape}")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_backward(y: np.ndarray, grad_out: np.ndarray,
                     axis: int = -1) -> np.ndarray:
    """Gradient through softmax given its output ``y``.

    dx = y * (g - sum(g * y)) along the softmax axis.
    """
    _require(y.shape == grad_out.shape,
             f"softmax cache {y.shape} vs upstream gradient {grad_out.shape}")
    inner = np.sum(grad_out * y, axis=axis, keepdims=True)
    return y * (grad_out - inner)


# ---------------------------------------------------------------- layernorm


def layernorm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
              eps: float = 1e-5) -> np.ndarray:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    _require(gain.shape == (x.shape[-1],) and bias.shape == (x.shape[-1],),
             f"layernorm gain/bias {gain.shape}/{bias.shape} do not match "
             f"last extent of {x.shape}")
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    sigma = np.sqrt(var + eps)
    xhat = (x - mu) / sigma
    return xhat * gain + bias


def layernorm_backward(x: np.ndarray, gain: np.ndarray, eps: float,
                       grad_out: np.ndarray
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of layernorm w.r.t. (x, gain, bias)."""
    _require(x.shape == grad_out.shape,
             f"layernorm cache {x.shape} vs upstream gradient {grad_out.shape}")
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    sigma = np.sqrt(var + eps)
    xhat = (x - mu) / sigma

    ghat = grad_out * gain
    m1 = ghat.mean(axis=-1, keepdims=True)
    m2 = (ghat * xhat).mean(axis=-1, keepdims=True)
    dx = (ghat - m1 - xhat * m2) / sigma

    lead = tuple(range(x.ndim - 1))
    dgain = (grad_out * xhat).sum(axis=lead)
    dbias = grad_out.sum(axis=lead)
    return dx, dgain, dbias


# ---------------------------------------------------------------- gelu


def gelu(x: np.ndarray) -> np.ndarray:
    """Elementwise GELU, tanh approximation (constants at module top)."""
    inner = GELU_SCALE * (x + GELU_CUBIC * x ** 3)
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Gradient of the tanh-approximation GELU."""
    _require(x.shape == grad_out.shape,
             f"gelu cache {x.shape} vs upstream gradient {grad_out.shape}")
    inner = GELU_SCALE * (x + GELU_CUBIC * x ** 3)
    t = np.tanh(inner)
    # d/dx [0.5 x (1+t)] = 0.5 (1+t) + 0.5 x (1-t^2) * inner'
    dinner = GELU_SCALE * (1.0 + 3.0 * GELU_CUBIC * x ** 2)
    return grad_out * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * dinner)


# ---------------------------------------------------------------- add / hadamard


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise sum; ``b`` may also be a last-axis bias vector."""
    _require(a.shape == b.shape or b.shape == (a.shape[-1],),
             f"add operands {a.shape} and {b.shape} are not same-shape or "
             f"(tensor, last-axis bias)")
    return a + b


def add_backward(a: np.ndarray, b: np.ndarray,
                 grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``add``; the bias case reduces over leading axes."""
    _require(grad_out.shape == a.shape,
             f"add cache {a.shape} vs upstream gradient {grad_out.shape}")
    if b.shape == a.shape:
        return grad_out.copy(), grad_out.copy()
    return grad_out.copy(), grad_out.sum(axis=tuple(range(a.ndim - 1)))


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise product of same-shape arrays."""
    _require(a.shape == b.shape,
             f"hadamard operands differ: {a.shape} vs {b.shape}")
    return a * b


def hadamard_backward(a: np.ndarray, b: np.ndarray,
                      grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the elementwise product."""
    _require(grad_out.shape == a.shape,
             f"hadamard cache {a.shape} vs upstream gradient {grad_out.shape}")
    return grad_out * b, grad_out * a


# ---------------------------------------------------------------- dispatcher

# op name -> (number of differentiable inputs, backward callable)
_BACKWARDS = {
    "matmul": matmul_backward,
    "softmax": softmax_backward,
    "layernorm": layernorm_backward,
    "gelu": gelu_backward,
    "add": add_backward,
    "hadamard": hadamard_backward,
}


def backward_of(op: str, cache: tuple, grad_out: np.ndarray):
    """Dispatch to the backward companion of ``op``.

    ``cache`` holds the forward values each backward documents:
    matmul (a, b); softmax (y,) or (y, axis); layernorm (x, gain, eps);
    gelu (x,); add (a, b); hadamard (a, b).
    """
    if op not in _BACKWARDS:
        raise KeyError(f"no backward registered for op {op!r}; "
                       f"known: {sorted(_BACKWARDS)}")
    return _BACKWARDS[op](*cache, grad_out)
