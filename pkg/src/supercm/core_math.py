"""Dense numeric primitives shared by every other module.

Matrices are plain 2-D numpy arrays, one sample per row. Gradients are
computed by hand; :func:`finite_diff_grad` is the oracle the tests use to
check them.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kernels import LOG_EPS

__all__ = [
    "LOG_EPS",
    "ShapeError",
    "EmptyInputError",
    "EvaluationError",
    "as_matrix",
    "softmax_rows",
    "softmax_backward",
    "cross_entropy",
    "cross_entropy_grad",
    "linear_forward",
    "AdamState",
    "adam_step",
    "finite_diff_grad",
]


class ShapeError(ValueError):
    """Operand shapes do not line up."""


class EmptyInputError(ValueError):
    """An operation received zero rows or zero columns."""


class EvaluationError(ArithmeticError):
    """A function under evaluation returned a non-finite value."""


def as_matrix(a, dtype=np.float64) -> np.ndarray:
    m = np.asarray(a, dtype=dtype)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {m.ndim} dimensions")
    return m


def _check_labels(labels, n: int, k: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.shape[0] != n:
        raise ShapeError(f"{y.shape[0]} labels for {n} rows")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise IndexError(f"label out of range [0, {k})")
    return y


def softmax_rows(logits) -> np.ndarray:
    """Row-wise softmax, stabilised by subtracting each row's max."""
    z = np.ascontiguousarray(logits)
    if z.ndim != 2:
        raise ShapeError("softmax_rows expects a 2-D matrix")
    if z.shape[0] == 0 or z.shape[1] == 0:
        raise EmptyInputError(f"softmax_rows on empty shape {z.shape}")
    return kernels.softmax_rows(z)


def softmax_backward(probs: np.ndarray, grad_probs: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. softmax outputs back to the logits."""
    inner = np.sum(grad_probs * probs, axis=1, keepdims=True)
    return probs * (grad_probs - inner)


def cross_entropy(probs, labels) -> float:
    """Mean of ``-log p[i, y_i]``, probabilities clamped below at 1e-12."""
    p = np.asarray(probs)
    y = _check_labels(labels, p.shape[0], p.shape[1])
    if p.shape[0] == 0:
        raise EmptyInputError("cross_entropy on zero rows")
    picked = p[np.arange(p.shape[0]), y]
    return float(-np.mean(np.log(np.maximum(picked, LOG_EPS))))


def cross_entropy_grad(probs, labels) -> np.ndarray:
    """Gradient of :func:`cross_entropy` w.r.t. the softmax logits.

    Assumes ``probs`` came from :func:`softmax_rows` and that no selected
    probability sits on the clamp.
    """
    p = np.asarray(probs)
    y = _check_labels(labels, p.shape[0], p.shape[1])
    g = p.copy()
    g[np.arange(p.shape[0]), y] -= 1.0
    return g / p.shape[0]


def linear_forward(inputs, weights, bias) -> np.ndarray:
    x = np.asarray(inputs)
    w = np.asarray(weights)
    b = np.asarray(bias).reshape(-1)
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"input cols {x.shape[1]} != weight rows {w.shape[0]}")
    if b.shape[0] != w.shape[1]:
        raise ShapeError(f"bias length {b.shape[0]} != weight cols {w.shape[1]}")
    return x @ w + b


@dataclass
class AdamState:
    """Moment buffers for a list of parameter arrays."""

    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kw) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kw,
        )


def adam_step(params, grads, state: AdamState, lr: float):
    """One bias-corrected Adam update, in place on ``params`` and ``state``.

    ``params`` and ``grads`` are equal-length lists of arrays (a single array
    is accepted too). Returns ``(params, state)``.
    """
    single = isinstance(params, np.ndarray)
    if single:
        params, grads = [params], [grads]
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and Adam buffers differ in count")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return (params[0] if single else params), state


def finite_diff_grad(f, at, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``at``."""
    x = np.array(at, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        fp = float(f(x))
        flat[j] = orig - h
        fm = float(f(x))
        flat[j] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError(f"non-finite function value at coordinate {j}")
        gflat[j] = (fp - fm) / (2.0 * h)
    return grad
