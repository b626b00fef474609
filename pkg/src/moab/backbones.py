"""Modality encoders producing 32-dim embeddings."""

from __future__ import annotations

from . import tensor as T
from .exceptions import DimensionError
from .fusion import N_CLASSES
from .nn import Conv2d, Dropout, LayerNorm, Linear, Module
from .tensor import Tensor

N_GENES = 80
IMAGE_SIZE = 32
EMBED_DIM = 32


class GenomicMLP(Module):
    """Three FC -> ReLU -> LayerNorm blocks of widths 80, 40, 32.

    Dropout (0.2) follows the second and third blocks.
    """

    widths = (80, 40, 32)

    def __init__(self, rng, dropout_rng, dropout: float = 0.2):
        dims = (N_GENES,) + self.widths
        self.fcs = [Linear(i, o, rng) for i, o in zip(dims[:-1], dims[1:])]
        self.norms = [LayerNorm(o) for o in self.widths]
        self.drop2 = Dropout(dropout, dropout_rng)
        self.drop3 = Dropout(dropout, dropout_rng)

    def forward(self, genes: Tensor) -> Tensor:
        if genes.ndim != 2 or genes.shape[1] != N_GENES:
            raise DimensionError(f"GenomicMLP expects (batch, {N_GENES}) genes, got {genes.shape}")
        x = genes
        for i, (fc, norm) in enumerate(zip(self.fcs, self.norms)):
            x = norm(T.relu(fc(x)))
            if i == 1:
                x = self.drop2(x)
            elif i == 2:
                x = self.drop3(x)
        return x


class ToyImageEncoder(Module):
    """Two stride-2 3x3 convolutions, global average pooling and an FC embedding."""

    def __init__(self, rng):
        self.conv1 = Conv2d(1, 8, 3, rng, stride=2, padding=1)
        self.conv2 = Conv2d(8, 16, 3, rng, stride=2, padding=1)
        self.fc = Linear(16, EMBED_DIM, rng)

    def forward(self, img: Tensor) -> Tensor:
        if img.ndim != 4 or img.shape[1:] != (1, IMAGE_SIZE, IMAGE_SIZE):
            raise DimensionError(
                f"ToyImageEncoder expects (batch, 1, {IMAGE_SIZE}, {IMAGE_SIZE}) images, got {img.shape}"
            )
        x = T.relu(self.conv1(img))
        x = T.relu(self.conv2(x))
        return self.fc(T.global_avg_pool(x))


class UnimodalTail(Module):
    """Dropout then FC(32 -> 3) on a single modality embedding; logits start at zero."""

    def __init__(self, rng, dropout_rng, dropout: float = 0.2, in_features: int = EMBED_DIM):
        self.drop = Dropout(dropout, dropout_rng)
        self.fc = Linear(in_features, N_CLASSES, rng)
        self.fc.weight.data[:] = 0.0

    def forward(self, embedding: Tensor) -> Tensor:
        return self.fc(self.drop(embedding))
