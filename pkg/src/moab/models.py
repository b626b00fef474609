"""End-to-end networks: encoders plus a fusion head or a unimodal tail."""

from __future__ import annotations

import numpy as np

from .backbones import GenomicMLP, ToyImageEncoder, UnimodalTail
from .exceptions import ConfigError
from .fusion import FusionConfig, Variant, build_fusion
from .nn import Module
from .tensor import Tensor

UNIMODAL_VARIANTS = ("img-only", "gene-only")
FUSION_VARIANTS = tuple(v.value for v in Variant)
ALL_VARIANTS = FUSION_VARIANTS + UNIMODAL_VARIANTS


class MultiModalNet(Module):
    def __init__(self, image_encoder: ToyImageEncoder, gene_encoder: GenomicMLP, fusion: Module):
        self.image_encoder = image_encoder
        self.gene_encoder = gene_encoder
        self.fusion = fusion

    def forward(self, images: Tensor, genes: Tensor) -> tuple[Tensor, Tensor]:
        a = self.image_encoder(images)
        b = self.gene_encoder(genes)
        return self.fusion(a, b)


class UnimodalNet(Module):
    """Single-modality classifier; the encoder output is the exported embedding."""

    def __init__(self, encoder: Module, tail: UnimodalTail, modality: str):
        self.encoder = encoder
        self.tail = tail
        self.modality = modality

    def forward(self, images: Tensor, genes: Tensor) -> tuple[Tensor, Tensor]:
        embedding = self.encoder(images if self.modality == "image" else genes)
        return self.tail(embedding), embedding


def build_network(
    variant: str,
    seed: int | np.random.SeedSequence = 0,
    hidden: int = 64,
    dropout: float = 0.1,
    epsilon: float = 1.2e-20,
) -> Module:
    """Construct a freshly initialized network for ``variant``.

    Initialization and dropout draw from two independent streams derived
    from ``seed``.
    """
    if variant not in ALL_VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {', '.join(ALL_VARIANTS)}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init_ss, drop_ss = ss.spawn(2)
    rng = np.random.default_rng(init_ss)
    drop_rng = np.random.default_rng(drop_ss)
    if variant == "img-only":
        return UnimodalNet(ToyImageEncoder(rng), UnimodalTail(rng, drop_rng), "image")
    if variant == "gene-only":
        return UnimodalNet(GenomicMLP(rng, drop_rng), UnimodalTail(rng, drop_rng), "genes")
    config = FusionConfig(variant=variant, hidden=hidden, dropout=dropout, epsilon_div=epsilon)
    image_encoder = ToyImageEncoder(rng)
    gene_encoder = GenomicMLP(rng, drop_rng)
    return MultiModalNet(image_encoder, gene_encoder, build_fusion(config, rng, drop_rng))
