"""Layer containers built on :mod:`moab.tensor`."""

from __future__ import annotations

from collections.abc import Iterator

import numpy as np

from . import tensor as T
from .exceptions import DimensionError, ParameterError
from .tensor import Parameter, Tensor


def orthogonal_init(shape, gain: float = 1.0, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw a (scaled) semi-orthogonal matrix.

    Rows are orthonormal when ``m <= n`` and columns otherwise; the draw is
    the QR factor of a standard normal matrix with its sign fixed by the
    diagonal of R so the result is uniformly distributed.  Shapes with more
    than two axes are flattened to ``(shape[0], prod(shape[1:]))``.
    """
    rng = np.random.default_rng() if rng is None else rng
    shape = tuple(int(s) for s in shape)
    m = shape[0]
    n = int(np.prod(shape[1:])) if len(shape) > 1 else 1
    flat = rng.standard_normal((m, n))
    if m < n:
        flat = flat.T
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if m < n:
        q = q.T
    return (gain * q).reshape(shape)


class Module:
    """Base class tracking parameters, submodules and the train/eval flag."""

    training = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator[Module]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> Module:
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {missing}, unexpected {unexpected}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise DimensionError(f"{name}: stored shape {value.shape} != {p.shape}")
            p.data[...] = value


def count_params(model: Module) -> int:
    """Total number of scalar entries across all parameters."""
    return int(sum(p.size for p in model.parameters()))


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, gain: float = 1.0):
        self.weight = Parameter(orthogonal_init((out_features, in_features), gain, rng))
        self.bias = Parameter(np.zeros(out_features))

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.eps = eps
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class Dropout(Module):
    def __init__(self, rate: float, rng: np.random.Generator):
        if not 0.0 <= rate < 1.0:
            raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return T.dropout(x, self.rate, self.training, self.rng)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
    ):
        self.stride = stride
        self.padding = padding
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.weight = Parameter(orthogonal_init(shape, 1.0, rng))
        self.bias = Parameter(np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class PointwiseConv(Module):
    """1x1 convolution; ``weight`` is (out_channels, in_channels)."""

    def __init__(self, in_channels: int, out_channels: int, weight: np.ndarray):
        weight = np.asarray(weight, dtype=np.float64)
        if weight.shape != (out_channels, in_channels):
            raise DimensionError(f"expected weight {(out_channels, in_channels)}, got {weight.shape}")
        self.weight = Parameter(weight)
        self.bias = Parameter(np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d_1x1(x, self.weight, self.bias)
