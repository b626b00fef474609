"""Multi-modal outer-arithmetic fusion of image and gene embeddings."""

from .data import GeneratorSpec, Mode, Sample, generate, load_csv, save_csv, split
from .estimator import FusionClassifier
from .fusion import (
    FusionConfig,
    PadKind,
    outer_addition,
    outer_division,
    outer_product,
    outer_subtraction,
    pad,
)
from .metrics import confusion, macro_f1, micro_f1, per_class_f1
from .models import build_network
from .tensor import Parameter, Tensor, no_grad
from .training import RunConfig, run_ablation_suite, train

__version__ = "0.1.0"

__all__ = [
    "FusionClassifier",
    "FusionConfig",
    "GeneratorSpec",
    "Mode",
    "PadKind",
    "Parameter",
    "RunConfig",
    "Sample",
    "Tensor",
    "build_network",
    "confusion",
    "generate",
    "load_csv",
    "macro_f1",
    "micro_f1",
    "no_grad",
    "outer_addition",
    "outer_division",
    "outer_product",
    "outer_subtraction",
    "pad",
    "per_class_f1",
    "run_ablation_suite",
    "save_csv",
    "split",
    "train",
]
