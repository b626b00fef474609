"""Outer-arithmetic fusion of two modality embeddings.

Each operator takes two padded vectors (a leading 1 for product/division,
a leading 0 for addition/subtraction) and combines every pair of entries,
so the original vectors reappear in row 0 and column 0 of the result.
Inputs may be single vectors ``(N,)`` or batches ``(batch, N)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import ContractError, DimensionError, ParameterError
from .nn import Dropout, Linear, Module, PointwiseConv
from .tensor import Tensor

DEFAULT_EPSILON = 1.2e-20
N_CLASSES = 3


class PadKind(enum.Enum):
    ONE = 1.0
    ZERO = 0.0


class Branch(enum.Enum):
    ADDITION = "A"
    SUBTRACTION = "S"
    PRODUCT = "P"
    DIVISION = "D"


class Variant(str, enum.Enum):
    MOAB = "moab"
    CONCAT = "concat"
    OAF_ONLY = "oaf"
    DBF = "dbf"
    STD_ADD = "std-add"


@dataclass(frozen=True)
class PaddedVector:
    values: Tensor
    kind: PadKind


@dataclass(frozen=True)
class MultiModalTensor:
    """Stacked sigmoid branch maps and their channel-fused condensation."""

    M: Tensor
    M_star: Tensor


@dataclass(frozen=True)
class FusionConfig:
    variant: Variant = Variant.MOAB
    epsilon_div: float = DEFAULT_EPSILON
    hidden: int = 64
    dropout: float = 0.1
    feature_dim: int = 32

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.epsilon_div > 0:
            raise ParameterError(f"epsilon_div must be positive, got {self.epsilon_div}")
        if self.hidden < 1 or self.feature_dim < 1:
            raise ParameterError("hidden and feature_dim must be positive")

    @property
    def fused_width(self) -> int:
        return (self.feature_dim + 1) ** 2


def pad(v: Tensor, kind: PadKind) -> PaddedVector:
    """Prepend the pad constant along the last axis."""
    if v.ndim not in (1, 2):
        raise DimensionError(f"pad expects (N,) or (batch, N), got {v.shape}")
    lead = np.full(v.shape[:-1] + (1,), kind.value)
    out = np.concatenate([lead, v.data], axis=-1)

    def backward(g):
        T.accumulate(v, g[..., 1:])

    return PaddedVector(Tensor.from_op(out, (v,), backward, f"pad_{kind.name.lower()}"), kind)


def _operands(a: PaddedVector, b: PaddedVector, kind: PadKind, name: str) -> tuple[Tensor, Tensor]:
    if a.kind is not kind or b.kind is not kind:
        raise ContractError(f"{name} needs two {kind.name}-padded vectors, got {a.kind.name} and {b.kind.name}")
    x, y = a.values, b.values
    if x.ndim != y.ndim or x.shape[:-1] != y.shape[:-1]:
        raise DimensionError(f"{name}: batch shapes {x.shape} and {y.shape} differ")
    return x, y


def outer_product(a1: PaddedVector, b1: PaddedVector) -> Tensor:
    """``P[i, j] = a1[i] * b1[j]``."""
    x, y = _operands(a1, b1, PadKind.ONE, "outer_product")
    xa, yb = x.data[..., :, None], y.data[..., None, :]

    def backward(g):
        T.accumulate(x, (g * yb).sum(axis=-1))
        T.accumulate(y, (g * xa).sum(axis=-2))

    return Tensor.from_op(xa * yb, (x, y), backward, "outer_product")


def outer_division(a1: PaddedVector, b1: PaddedVector, eps: float = DEFAULT_EPSILON) -> Tensor:
    """``D[i, j] = a1[i] / (b1[j] + eps)``.

    ``eps`` shifts the denominator only; entries where ``b1[j]`` is zero
    become very large and are expected to saturate a following sigmoid.
    """
    x, y = _operands(a1, b1, PadKind.ONE, "outer_division")
    xa = x.data[..., :, None]
    den = y.data[..., None, :] + eps
    out = xa / den

    def backward(g):
        T.accumulate(x, (g / den).sum(axis=-1))
        T.accumulate(y, -(g * out / den).sum(axis=-2))

    return Tensor.from_op(out, (x, y), backward, "outer_division")


def outer_addition(a0: PaddedVector, b0: PaddedVector) -> Tensor:
    """``A[i, j] = a0[i] + b0[j]``."""
    x, y = _operands(a0, b0, PadKind.ZERO, "outer_addition")

    def backward(g):
        T.accumulate(x, g.sum(axis=-1))
        T.accumulate(y, g.sum(axis=-2))

    return Tensor.from_op(x.data[..., :, None] + y.data[..., None, :], (x, y), backward, "outer_addition")


def outer_subtraction(a0: PaddedVector, b0: PaddedVector) -> Tensor:
    """``S[i, j] = a0[i] - b0[j]``."""
    x, y = _operands(a0, b0, PadKind.ZERO, "outer_subtraction")

    def backward(g):
        T.accumulate(x, g.sum(axis=-1))
        T.accumulate(y, -g.sum(axis=-2))

    return Tensor.from_op(x.data[..., :, None] - y.data[..., None, :], (x, y), backward, "outer_subtraction")


def branch_map(branch: Branch, a: Tensor, b: Tensor, eps: float = DEFAULT_EPSILON) -> Tensor:
    """Pad ``a`` and ``b`` as the branch requires and apply its outer operator."""
    if branch is Branch.ADDITION:
        return outer_addition(pad(a, PadKind.ZERO), pad(b, PadKind.ZERO))
    if branch is Branch.SUBTRACTION:
        return outer_subtraction(pad(a, PadKind.ZERO), pad(b, PadKind.ZERO))
    if branch is Branch.PRODUCT:
        return outer_product(pad(a, PadKind.ONE), pad(b, PadKind.ONE))
    return outer_division(pad(a, PadKind.ONE), pad(b, PadKind.ONE), eps)


def matched_expansion_width(feature_dim: int, hidden: int, fused_width: int) -> int:
    """Width of the standard-addition expansion layer whose head has as many
    parameters as the single-branch head over ``fused_width`` inputs."""
    return max(1, round(fused_width * hidden / (feature_dim + 1 + hidden)))


class ClassifierHead(Module):
    """FC -> ReLU -> dropout -> FC; the ReLU output is the exported embedding.

    The logit layer starts at zero so the first Adam steps on the wide
    ``fc1`` cannot throw the initial loss far above ln 3.
    """

    def __init__(self, in_features: int, hidden: int, dropout: float, rng, dropout_rng):
        self.fc1 = Linear(in_features, hidden, rng)
        self.drop = Dropout(dropout, dropout_rng)
        self.fc2 = Linear(hidden, N_CLASSES, rng)
        self.fc2.weight.data[:] = 0.0

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        embedding = T.relu(self.fc1(x))
        return self.fc2(self.drop(embedding)), embedding


class FusionHead(Module):
    """Common plumbing: batch promotion of single vectors and input checks."""

    config: FusionConfig

    def forward(self, a: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
        single = a.ndim == 1
        if single:
            a = T.reshape(a, (1, -1))
            b = T.reshape(b, (1, -1))
        d = self.config.feature_dim
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != d or b.shape[1] != d or a.shape[0] != b.shape[0]:
            raise DimensionError(f"fusion expects two (batch, {d}) embeddings, got {a.shape} and {b.shape}")
        logits, embedding = self._forward(a, b)
        if single:
            logits = T.reshape(logits, (N_CLASSES,))
            embedding = T.reshape(embedding, (embedding.shape[1],))
        return logits, embedding

    def _forward(self, a: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
        raise NotImplementedError


class ChannelFusion(FusionHead):
    """Sigmoid branch maps stacked as channels, condensed by a 1x1 convolution.

    With all four branches this is the MOAB block; with (A, P) it is the
    dual-branch ablation.
    """

    def __init__(self, config: FusionConfig, branches, rng, dropout_rng):
        self.config = config
        self.branches = tuple(Branch(b) for b in branches)
        n = len(self.branches)
        weight = 1.0 / n + 0.01 * rng.standard_normal((1, n))
        self.conv = PointwiseConv(n, 1, weight)
        # start M* centred on zero rather than on the sigmoid midpoint
        self.conv.bias.data[:] = -0.5 * weight.sum()
        self.head = ClassifierHead(config.fused_width, config.hidden, config.dropout, rng, dropout_rng)

    @property
    def stacked_width(self) -> int:
        """Head input width if the branch maps were flattened and concatenated instead."""
        return len(self.branches) * self.config.fused_width

    def fusion_maps(self, a: Tensor, b: Tensor) -> MultiModalTensor:
        """M and M* for a batch; single vectors give maps without the batch axis."""
        single = a.ndim == 1
        if single:
            a, b = T.reshape(a, (1, -1)), T.reshape(b, (1, -1))
        maps = [T.sigmoid(branch_map(br, a, b, self.config.epsilon_div)) for br in self.branches]
        M = T.stack(maps, axis=1)
        M_star = self.conv(M)
        if single:
            M, M_star = T.reshape(M, M.shape[1:]), T.reshape(M_star, M_star.shape[1:])
        return MultiModalTensor(M, M_star)

    def _forward(self, a, b):
        fused = self.fusion_maps(a, b).M_star
        return self.head(T.reshape(fused, (fused.shape[0], -1)))


class OuterAdditionFusion(FusionHead):
    """Single sigmoid(A) map flattened straight into the head."""

    def __init__(self, config: FusionConfig, rng, dropout_rng):
        self.config = config
        self.head = ClassifierHead(config.fused_width, config.hidden, config.dropout, rng, dropout_rng)

    def _forward(self, a, b):
        A = T.sigmoid(branch_map(Branch.ADDITION, a, b))
        return self.head(T.reshape(A, (A.shape[0], -1)))


class ConcatFusion(FusionHead):
    def __init__(self, config: FusionConfig, rng, dropout_rng):
        self.config = config
        self.head = ClassifierHead(2 * config.feature_dim, config.hidden, config.dropout, rng, dropout_rng)

    def _forward(self, a, b):
        return self.head(T.concat([a, b], axis=1))


class StandardAdditionFusion(FusionHead):
    """Elementwise ``a + b`` widened by a sigmoid expansion layer.

    The expansion width defaults to the value that gives this head the
    same parameter count as :class:`OuterAdditionFusion`.
    """

    def __init__(self, config: FusionConfig, rng, dropout_rng, expansion: int | None = None):
        self.config = config
        if expansion is None:
            expansion = matched_expansion_width(config.feature_dim, config.hidden, config.fused_width)
        self.expand = Linear(config.feature_dim, expansion, rng)
        self.head = ClassifierHead(expansion, config.hidden, config.dropout, rng, dropout_rng)

    def _forward(self, a, b):
        return self.head(T.sigmoid(self.expand(T.add(a, b))))


def build_fusion(config: FusionConfig, rng: np.random.Generator, dropout_rng: np.random.Generator) -> FusionHead:
    v = config.variant
    if v is Variant.MOAB:
        return ChannelFusion(config, "ASPD", rng, dropout_rng)
    if v is Variant.DBF:
        return ChannelFusion(config, "AP", rng, dropout_rng)
    if v is Variant.OAF_ONLY:
        return OuterAdditionFusion(config, rng, dropout_rng)
    if v is Variant.CONCAT:
        return ConcatFusion(config, rng, dropout_rng)
    return StandardAdditionFusion(config, rng, dropout_rng)
