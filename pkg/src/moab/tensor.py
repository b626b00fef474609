"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation is a plain function that computes its result
with numpy and registers a closure that pushes the output gradient back to
its inputs.  Broadcasting is deliberately limited to adding a bias vector
along the last axis so each backward rule stays easy to audit.
"""

from __future__ import annotations

import contextlib
from collections.abc import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .exceptions import DataError, DimensionError, ParameterError, StateError

_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph construction inside the block."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """An n-dimensional float64 array that can track gradients.

    ``grad`` is an array of the same shape as ``data`` when ``requires_grad``
    is set and ``None`` otherwise.
    """

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = ""

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence[Tensor],
        backward: Callable[[np.ndarray], None],
        op: str,
    ) -> Tensor:
        """Wrap the result of a primitive operation.

        ``backward`` receives the gradient of the output and is responsible
        for accumulating into ``parent.grad`` of every parent that requires
        it (see :func:`accumulate`).  The graph is recorded only when some
        parent requires a gradient and :func:`no_grad` is not active.
        """
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        track = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out.grad = np.zeros_like(out.data) if track else None
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        out.op = op
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable tensor's ``grad``."""
        if not self.requires_grad:
            raise StateError("backward() called on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise StateError(
                    f"backward() without an explicit gradient needs a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.shape:
            raise DimensionError(f"seed gradient shape {grad.shape} != tensor shape {self.shape}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        self.grad += grad
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __sub__(self, other: Tensor) -> Tensor:
        return sub(self, other)

    def __mul__(self, other) -> Tensor:
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> Tensor:
        return scale(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)


class Parameter(Tensor):
    """A trainable leaf tensor; its dotted name is assigned by the owning module."""

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def accumulate(t: Tensor, g: np.ndarray) -> None:
    """Add ``g`` into ``t.grad`` when ``t`` takes part in differentiation."""
    if t.requires_grad:
        t.grad += g


def _same_shape(x: Tensor, y: Tensor, op: str) -> None:
    if x.shape != y.shape:
        raise DimensionError(f"{op}: shapes {x.shape} and {y.shape} differ")


def add(x: Tensor, y: Tensor) -> Tensor:
    """Elementwise sum; ``y`` may also be a bias vector over the last axis of ``x``."""
    if y.ndim == 1 and x.ndim >= 1 and x.shape != y.shape:
        if y.shape[0] != x.shape[-1]:
            raise DimensionError(f"add: bias shape {y.shape} does not match last axis of {x.shape}")
        lead = tuple(range(x.ndim - 1))

        def backward(g):
            accumulate(x, g)
            accumulate(y, g.sum(axis=lead))

        return Tensor.from_op(x.data + y.data, (x, y), backward, "add_bias")

    _same_shape(x, y, "add")

    def backward(g):
        accumulate(x, g)
        accumulate(y, g)

    return Tensor.from_op(x.data + y.data, (x, y), backward, "add")


def sub(x: Tensor, y: Tensor) -> Tensor:
    _same_shape(x, y, "sub")

    def backward(g):
        accumulate(x, g)
        accumulate(y, -g)

    return Tensor.from_op(x.data - y.data, (x, y), backward, "sub")


def mul(x: Tensor, y: Tensor) -> Tensor:
    _same_shape(x, y, "mul")

    def backward(g):
        accumulate(x, g * y.data)
        accumulate(y, g * x.data)

    return Tensor.from_op(x.data * y.data, (x, y), backward, "mul")


def scale(x: Tensor, c: float) -> Tensor:
    def backward(g):
        accumulate(x, c * g)

    return Tensor.from_op(c * x.data, (x,), backward, "scale")


def sum(x: Tensor) -> Tensor:  # noqa: A001
    def backward(g):
        accumulate(x, np.broadcast_to(g, x.shape))

    return Tensor.from_op(np.asarray(x.data.sum()), (x,), backward, "sum")


def mean(x: Tensor) -> Tensor:
    n = x.size

    def backward(g):
        accumulate(x, np.broadcast_to(g / n, x.shape))

    return Tensor.from_op(np.asarray(x.data.mean()), (x,), backward, "mean")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from exc

    def backward(g):
        accumulate(x, g.reshape(x.shape))

    return Tensor.from_op(out, (x,), backward, "reshape")


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        accumulate(x, g.transpose(inverse))

    return Tensor.from_op(x.data.transpose(axes), (x,), backward, "transpose")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            accumulate(t, piece)

    return Tensor.from_op(out, tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack: shapes differ {[t.shape for t in tensors]}")
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        for i, t in enumerate(tensors):
            accumulate(t, np.take(g, i, axis=axis))

    return Tensor.from_op(out, tensors, backward, "stack")


def matmul(x: Tensor, y: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors."""
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {x.shape} by {y.shape}")

    def backward(g):
        accumulate(x, g @ y.data.T)
        accumulate(y, x.data.T @ g)

    return Tensor.from_op(x.data @ y.data, (x, y), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` for ``x`` of shape (batch, in) and ``weight`` (out, in)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise DimensionError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    out = x.data @ weight.data.T
    parents: tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
        out = out + bias.data
        parents = (x, weight, bias)

    def backward(g):
        accumulate(x, g @ weight.data)
        accumulate(weight, g.T @ x.data)
        if bias is not None:
            accumulate(bias, g.sum(axis=0))

    return Tensor.from_op(out, parents, backward, "linear")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        accumulate(x, g * mask)

    return Tensor.from_op(np.where(mask, x.data, 0.0), (x,), backward, "relu")


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data)

    def backward(g):
        accumulate(x, g * s * (1.0 - s))

    return Tensor.from_op(s, (x,), backward, "sigmoid")


def softmax_rows(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"softmax_rows expects a 2-D tensor, got {x.shape}")
    z = np.exp(x.data - x.data.max(axis=1, keepdims=True))
    s = z / z.sum(axis=1, keepdims=True)

    def backward(g):
        accumulate(x, s * (g - (g * s).sum(axis=1, keepdims=True)))

    return Tensor.from_op(s, (x,), backward, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row of a (batch, d) tensor, then apply ``gamma * x_hat + beta``."""
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise DimensionError(
            f"layer_norm: input {x.shape}, gamma {gamma.shape}, beta {beta.shape}"
        )
    d = x.shape[1]
    mu = x.data.mean(axis=1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=1, keepdims=True) + eps)
    x_hat = centered * inv_std

    def backward(g):
        accumulate(gamma, (g * x_hat).sum(axis=0))
        accumulate(beta, g.sum(axis=0))
        if x.requires_grad:
            dx_hat = g * gamma.data
            x.grad += (inv_std / d) * (
                d * dx_hat
                - dx_hat.sum(axis=1, keepdims=True)
                - x_hat * (dx_hat * x_hat).sum(axis=1, keepdims=True)
            )

    return Tensor.from_op(gamma.data * x_hat + beta.data, (x, gamma, beta), backward, "layer_norm")


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)`` at train time."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def backward(g):
        accumulate(x, g * mask)

    return Tensor.from_op(x.data * mask, (x,), backward, "dropout")


def conv2d_1x1(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Pointwise convolution: mixes channels independently at every pixel.

    ``x`` is (batch, C, H, W), ``weight`` is (C_out, C), ``bias`` is (C_out,).
    """
    if x.ndim != 4 or weight.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise DimensionError(f"conv2d_1x1: input {x.shape} incompatible with weight {weight.shape}")
    out = np.einsum("oc,bchw->bohw", weight.data, x.data)
    parents: tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"conv2d_1x1: bias {bias.shape} does not match weight {weight.shape}")
        out = out + bias.data[None, :, None, None]
        parents = (x, weight, bias)

    def backward(g):
        accumulate(x, np.einsum("oc,bohw->bchw", weight.data, g))
        accumulate(weight, np.einsum("bohw,bchw->oc", g, x.data))
        if bias is not None:
            accumulate(bias, g.sum(axis=(0, 2, 3)))

    return Tensor.from_op(out, parents, backward, "conv2d_1x1")


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Square-kernel 2-D cross-correlation with zero padding.

    ``x`` is (batch, C, H, W) and ``weight`` is (C_out, C, k, k).
    """
    if x.ndim != 4 or weight.ndim != 4 or weight.shape[1] != x.shape[1]:
        raise DimensionError(f"conv2d: input {x.shape} incompatible with weight {weight.shape}")
    k = weight.shape[2]
    if weight.shape[3] != k:
        raise DimensionError(f"conv2d: kernel must be square, got {weight.shape[2:]}")
    pad = ((0, 0), (0, 0), (padding, padding), (padding, padding))
    xp = np.pad(x.data, pad)
    if xp.shape[2] < k or xp.shape[3] < k:
        raise DimensionError(f"conv2d: kernel {k} larger than padded input {xp.shape[2:]}")
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    h_out, w_out = cols.shape[2], cols.shape[3]
    out = np.einsum("bchwij,ocij->bohw", cols, weight.data, optimize=True)
    parents: tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
        parents = (x, weight, bias)

    def backward(g):
        accumulate(weight, np.einsum("bohw,bchwij->ocij", g, cols, optimize=True))
        if bias is not None:
            accumulate(bias, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = np.einsum("bohw,ocij->bchwij", g, weight.data, optimize=True)
            dxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride] += dcols[
                        :, :, :, :, i, j
                    ]
            h, w = x.shape[2], x.shape[3]
            x.grad += dxp[:, :, padding : padding + h, padding : padding + w]

    return Tensor.from_op(out, parents, backward, "conv2d")


def global_avg_pool(x: Tensor) -> Tensor:
    """Average over the spatial axes of a (batch, C, H, W) tensor."""
    if x.ndim != 4:
        raise DimensionError(f"global_avg_pool expects (batch, C, H, W), got {x.shape}")
    n = x.shape[2] * x.shape[3]

    def backward(g):
        accumulate(x, np.broadcast_to(g[:, :, None, None] / n, x.shape))

    return Tensor.from_op(x.data.mean(axis=(2, 3)), (x,), backward, "global_avg_pool")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    n_classes = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError(f"labels must lie in [0, {n_classes - 1}], got {sorted(set(labels.tolist()))}")
    labels = labels.astype(np.int64)
    batch = logits.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    rows = np.arange(batch)
    loss = -log_probs[rows, labels].mean()

    def backward(g):
        d = np.exp(log_probs)
        d[rows, labels] -= 1.0
        accumulate(logits, g * d / batch)

    return Tensor.from_op(np.asarray(loss), (logits,), backward, "cross_entropy")
