"""scikit-learn compatible classifier wrapping the fusion networks."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import tensor as T
from .backbones import IMAGE_SIZE, N_GENES
from .data import Sample, check_labels, index_batches, to_features
from .exceptions import ConfigError, DimensionError, FileError, TrainingError
from .models import ALL_VARIANTS, UNIMODAL_VARIANTS, build_network
from .nn import count_params
from .optim import Adam
from .tensor import Tensor

logger = logging.getLogger(__name__)

N_FEATURES = N_GENES + IMAGE_SIZE * IMAGE_SIZE


def default_hyperparameters(fusion: str) -> tuple[float, float]:
    """(learning rate, weight decay): 1e-3 / 0 for unimodal runs, 5e-3 / 5e-4 for fusion."""
    if fusion in UNIMODAL_VARIANTS:
        return 1e-3, 0.0
    return 5e-3, 5e-4


def _as_features(X) -> np.ndarray:
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], Sample):
        X = to_features(X)[0]
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != N_FEATURES:
        raise DimensionError(
            f"expected {N_FEATURES} features ({N_GENES} genes + {IMAGE_SIZE}x{IMAGE_SIZE} pixels), got {X.shape[1]}"
        )
    return X


def split_features(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Undo :func:`moab.data.to_features`: returns (images, genes)."""
    genes = X[:, :N_GENES]
    images = X[:, N_GENES:].reshape(len(X), 1, IMAGE_SIZE, IMAGE_SIZE)
    return images, genes


class FusionClassifier(ClassifierMixin, BaseEstimator):
    """Grade classifier over paired image/gene inputs.

    ``X`` rows are ``[80 genes | 32*32 image pixels]`` (see
    :func:`moab.data.to_features`); a list of :class:`moab.data.Sample` is
    accepted too.  ``fusion`` picks the head: ``moab``, ``concat``, ``oaf``,
    ``dbf``, ``std-add``, or a unimodal baseline ``img-only`` / ``gene-only``.
    ``learning_rate`` and ``weight_decay`` default per variant.  With
    ``epochs=0`` fit only initializes the network.
    """

    def __init__(
        self,
        fusion: str = "moab",
        epochs: int = 10,
        batch_size: int = 8,
        learning_rate: float | None = None,
        weight_decay: float | None = None,
        hidden: int = 64,
        dropout: float = 0.1,
        epsilon: float = 1.2e-20,
        random_state: int | None = 0,
    ):
        self.fusion = fusion
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.hidden = hidden
        self.dropout = dropout
        self.epsilon = epsilon
        self.random_state = random_state

    def _resolved(self) -> tuple[float, float]:
        lr, wd = default_hyperparameters(self.fusion)
        lr = lr if self.learning_rate is None else self.learning_rate
        wd = wd if self.weight_decay is None else self.weight_decay
        return lr, wd

    def _validate_params(self) -> None:
        if self.fusion not in ALL_VARIANTS:
            raise ConfigError(f"unknown fusion {self.fusion!r}; choose from {', '.join(ALL_VARIANTS)}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        lr, wd = self._resolved()
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if wd < 0:
            raise ConfigError(f"weight decay must be non-negative, got {wd}")

    def _build(self):
        ss = np.random.SeedSequence(self.random_state)
        init_ss, shuffle_ss = ss.spawn(2)
        net = build_network(self.fusion, init_ss, self.hidden, self.dropout, self.epsilon)
        return net, np.random.default_rng(shuffle_ss)

    def fit(self, X, y=None):
        if y is None and isinstance(X, (list, tuple)) and X and isinstance(X[0], Sample):
            y = [s.grade for s in X]
        self._validate_params()
        X = _as_features(X)
        y = check_labels(y)
        if len(y) != len(X):
            raise DimensionError(f"{len(X)} rows but {len(y)} labels")
        images, genes = split_features(X)
        lr, wd = self._resolved()

        net, shuffle_rng = self._build()
        opt = Adam(net.parameters(), lr=lr, weight_decay=wd)
        net.train()
        self.loss_curve_ = []
        for epoch in range(self.epochs):
            total, seen = 0.0, 0
            for b, idx in enumerate(index_batches(len(X), self.batch_size, True, shuffle_rng)):
                logits, _ = net(Tensor(images[idx]), Tensor(genes[idx]))
                loss = T.cross_entropy(logits, y[idx])
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingError(f"non-finite loss {value} at epoch {epoch}, batch {b}")
                loss.backward()
                opt.step()
                total += value * len(idx)
                seen += len(idx)
            self.loss_curve_.append(total / seen)
            logger.debug("epoch %d loss %.4f", epoch, self.loss_curve_[-1])

        net.eval()
        self.network_ = net
        self.classes_ = np.arange(3)
        self.n_features_in_ = N_FEATURES
        self.n_params_ = count_params(net)
        return self

    def _forward(self, X, chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
        check_is_fitted(self, "network_")
        X = _as_features(X)
        images, genes = split_features(X)
        self.network_.eval()
        logits, embeddings = [], []
        with T.no_grad():
            for start in range(0, len(X), chunk):
                sl = slice(start, start + chunk)
                lg, emb = self.network_(Tensor(images[sl]), Tensor(genes[sl]))
                logits.append(lg.data)
                embeddings.append(emb.data)
        return np.concatenate(logits), np.concatenate(embeddings)

    def decision_function(self, X) -> np.ndarray:
        return self._forward(X)[0]

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X).argmax(axis=1)

    def transform(self, X) -> np.ndarray:
        """Penultimate activations (the exported embedding)."""
        return self._forward(X)[1]

    def save(self, directory) -> None:
        check_is_fitted(self, "network_")
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.savez(directory / "model.npz", **self.network_.state_dict())
        (directory / "estimator.json").write_text(json.dumps(self.get_params(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory) -> FusionClassifier:
        directory = Path(directory)
        try:
            est = cls(**json.loads((directory / "estimator.json").read_text()))
            net, _ = est._build()
            with np.load(directory / "model.npz") as state:
                net.load_state_dict(dict(state))
        except OSError as exc:
            raise FileError(f"cannot load model from {directory}: {exc}") from exc
        net.eval()
        est.network_ = net
        est.classes_ = np.arange(3)
        est.n_features_in_ = N_FEATURES
        est.n_params_ = count_params(net)
        est.loss_curve_ = []
        return est
