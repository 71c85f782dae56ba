"""
Tensor engine with reverse-mode automatic differentiation.

Tensors wrap float64 numpy arrays. Operations record themselves on the
innermost active ComputationTape; `backward` replays the tape in reverse
and accumulates gradients on every tensor that requires them. Without an
active tape the same operations run forward-only, which is how inference
and finite-difference checks evaluate the model.

Broadcasting is limited to trailing-axis affine operands: a 1-D operand
whose length equals the last axis of the other operand.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from tools.errors import ShapeError

GELU_COEFF = 0.044715
SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))

ArrayLike = Union[np.ndarray, Sequence[float], float]


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64, order="C")
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"


@dataclass
class TapeNode:
    """One recorded operation: inputs, output and the rule mapping dOut to dInputs."""
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class ComputationTape:
    """
    Ordered record of differentiable operations.

    Nodes are appended in execution order, so every node's inputs were
    produced before it. Use as a context manager to make the tape active:

        with ComputationTape() as tape:
            loss = ...
        backward(tape, loss)
    """

    def __init__(self):
        self.nodes: List[TapeNode] = []

    def record(self, output: Tensor, inputs: Tuple[Tensor, ...], rule):
        self.nodes.append(TapeNode(inputs=inputs, output=output, backward=rule))

    def __enter__(self) -> "ComputationTape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPES.remove(self)
        return False

    def __len__(self) -> int:
        return len(self.nodes)


_ACTIVE_TAPES: List[ComputationTape] = []


def current_tape() -> Optional[ComputationTape]:
    """Innermost active tape, or None when running forward-only."""
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


def _emit(data: np.ndarray, inputs: Tuple[Tensor, ...], rule) -> Tensor:
    tape = current_tape()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad)
    if needs_grad:
        tape.record(out, inputs, rule)
    return out


def backward(tape: ComputationTape, loss: Tensor):
    """
    Propagate dLoss/dTensor through the tape.

    Every tensor on the tape that requires gradients (leaves and
    intermediates) receives its gradient in `.grad`; existing buffers are
    added to, so repeated backward passes accumulate.

    Args:
        tape: Tape that recorded the forward pass ending in `loss`
        loss: Scalar tensor
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    touched: Dict[int, Tensor] = {id(loss): loss}

    for node in reversed(tape.nodes):
        g_out = grads.get(id(node.output))
        if g_out is None:
            continue
        input_grads = node.backward(g_out)
        for tensor, g in zip(node.inputs, input_grads):
            if g is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = np.array(g, dtype=np.float64)
                touched[key] = tensor

    for key, tensor in touched.items():
        if not tensor.requires_grad:
            continue
        g = grads[key].reshape(tensor.shape)
        tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g


# ---------------------------------------------------------------------------
# Shape helpers


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _is_trailing_vector(a: Tensor, b: Tensor) -> bool:
    return b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]


def _reduce_to_trailing(g: np.ndarray, length: int) -> np.ndarray:
    return g.reshape(-1, length).sum(axis=0)


def _check_axis(x: Tensor, axis: int, op: str) -> int:
    rank = x.ndim
    if not -rank <= axis < rank:
        raise ShapeError(f"{op}: axis {axis} out of range for shape {x.shape}")
    return axis % rank


# ---------------------------------------------------------------------------
# Elementwise and affine operations


def add(a: Tensor, b: Tensor) -> Tensor:
    """a + b for equal shapes, or b a trailing-axis vector (bias)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        return _emit(a.data + b.data, (a, b), lambda g: (g, g))
    if _is_trailing_vector(a, b):
        n = b.shape[0]
        return _emit(a.data + b.data, (a, b), lambda g: (g, _reduce_to_trailing(g, n)))
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; b may be a trailing-axis vector (gain)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        return _emit(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))
    if _is_trailing_vector(a, b):
        n = b.shape[0]
        return _emit(
            a.data * b.data, (a, b),
            lambda g: (g * b.data, _reduce_to_trailing(g * a.data, n)),
        )
    raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return _emit(x.data * factor, (x,), lambda g: (g * factor,))


def add_constant(x: Tensor, const: np.ndarray) -> Tensor:
    """x + const where const carries no gradient (e.g. an attention mask)."""
    const = np.asarray(const, dtype=np.float64)
    if const.shape != x.shape:
        raise ShapeError(f"add_constant: incompatible shapes {x.shape} and {const.shape}")
    return _emit(x.data + const, (x,), lambda g: (g,))


def mul_constant(x: Tensor, const: np.ndarray) -> Tensor:
    const = np.asarray(const, dtype=np.float64)
    if const.shape != x.shape:
        raise ShapeError(f"mul_constant: incompatible shapes {x.shape} and {const.shape}")
    return _emit(x.data * const, (x,), lambda g: (g * const,))


def tensor_sum(x: Tensor) -> Tensor:
    """Sum of all elements, returned as a scalar tensor."""
    shape = x.shape
    return _emit(np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(x: Tensor) -> Tensor:
    n = x.size
    return scale(tensor_sum(x), 1.0 / n)


# ---------------------------------------------------------------------------
# Linear algebra and structural operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of a [m x k] and b [k x n].

    Raises:
        ShapeError: operands are not 2-D or inner dimensions differ
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    return _emit(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {x.shape}")
    return _emit(x.data.T.copy(), (x,), lambda g: (g.T,))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape: cannot view shape {x.shape} as {shape}")
    original = x.shape
    return _emit(x.data.reshape(shape), (x,), lambda g: (g.reshape(original),))


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    if x.ndim != 2 or not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"slice_cols: invalid range [{start}, {stop}) for shape {x.shape}")
    shape = x.shape

    def rule(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        return (full,)

    return _emit(x.data[:, start:stop].copy(), (x,), rule)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    if x.ndim != 2 or not 0 <= start < stop <= x.shape[0]:
        raise ShapeError(f"slice_rows: invalid range [{start}, {stop}) for shape {x.shape}")
    shape = x.shape

    def rule(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return _emit(x.data[start:stop].copy(), (x,), rule)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts or any(p.ndim != 2 or p.shape[0] != parts[0].shape[0] for p in parts):
        raise ShapeError(f"concat_cols: incompatible shapes {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def rule(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _emit(np.concatenate([p.data for p in parts], axis=1), tuple(parts), rule)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if not parts or any(p.ndim != 2 or p.shape[1] != parts[0].shape[1] for p in parts):
        raise ShapeError(f"concat_rows: incompatible shapes {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def rule(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _emit(np.concatenate([p.data for p in parts], axis=0), tuple(parts), rule)


def take_rows(table: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather rows of a 2-D table (embedding lookup); repeated rows accumulate."""
    idx = np.asarray(indices, dtype=np.int64)
    if table.ndim != 2 or idx.ndim != 1:
        raise ShapeError(f"take_rows: expected a table and index vector, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"take_rows: index out of range for table of {table.shape[0]} rows")
    shape = table.shape

    def rule(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _emit(table.data[idx], (table,), rule)


def pick(x: Tensor, indices: Sequence[int]) -> Tensor:
    """Select x[i, indices[i]] for every row i of a matrix."""
    idx = np.asarray(indices, dtype=np.int64)
    if x.ndim != 2 or idx.shape != (x.shape[0],):
        raise ShapeError(f"pick: need one index per row of {x.shape}, got {idx.shape}")
    rows = np.arange(x.shape[0])
    shape = x.shape

    def rule(g):
        full = np.zeros(shape)
        full[rows, idx] = g
        return (full,)

    return _emit(x.data[rows, idx], (x,), rule)


# ---------------------------------------------------------------------------
# Nonlinearities and normalization


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax (max-subtracted) along `axis`."""
    axis = _check_axis(x, axis, "softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def rule(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _emit(y, (x,), rule)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(x, axis, "log_softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - log_z
    probs = np.exp(out)

    def rule(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _emit(out, (x,), rule)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """
    Normalize the last axis to zero mean / unit variance, then apply gamma, beta.

    Args:
        x: Input of any rank >= 1
        gamma: Gain, shape (last axis,)
        beta: Bias, shape (last axis,)
        eps: Added to the variance
    """
    n = x.shape[-1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ShapeError(
            f"layer_norm: gamma {gamma.shape} and beta {beta.shape} must match last axis of {x.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gamma.data + beta.data

    def rule(g):
        d_gamma = _reduce_to_trailing(g * xhat, n)
        d_beta = _reduce_to_trailing(g, n)
        d_xhat = g * gamma.data
        d_x = inv_std / n * (
            n * d_xhat
            - d_xhat.sum(axis=-1, keepdims=True)
            - xhat * (d_xhat * xhat).sum(axis=-1, keepdims=True)
        )
        return (d_x, d_gamma, d_beta)

    return _emit(out, (x, gamma, beta), rule)


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    u = SQRT_2_OVER_PI * (x.data + GELU_COEFF * x.data ** 3)
    t = np.tanh(u)
    out = 0.5 * x.data * (1.0 + t)

    def rule(g):
        du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * x.data ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * du),)

    return _emit(out, (x,), rule)


def parameter(data: ArrayLike, name: Optional[str] = None) -> Tensor:
    """Leaf tensor that requires gradients."""
    return Tensor(data, requires_grad=True, name=name)
