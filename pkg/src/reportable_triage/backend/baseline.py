"""Natively trainable baseline: logistic regression over hashed token features.

Features are unigrams and bigrams of the (already normalized) whitespace
tokens, hashed with CRC-32 into a fixed power-of-two dimension, so no
vocabulary file exists and hashing is identical across runs and platforms.
Training is plain per-example SGD on the L2-regularized logistic loss, with a
seeded shuffle each epoch, so equal data + hyperparameters + seed reproduce
the weight vector bit-for-bit.

Model files are little-endian binary: a fixed header (magic, format version,
feature_dim, seed, epochs, learning_rate, l2, bias, final_loss) followed by
the float64 weight vector. The loader rejects unknown versions.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import BaselineFormatError, ValidationError
from ..preprocess import NormalizedInput
from ..util import atomic_write_bytes
from .base import ClassifierScore

DEFAULT_FEATURE_DIM = 1 << 18
NGRAM_ORDERS = (1, 2)

_MAGIC = b"RTBL"
_FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQqIddddd")  # magic, ver, dim, seed, epochs, lr, l2, bias, loss, reserved
_MAX_LOGIT = 35.0


def hash_token_features(tokens: Sequence[str], feature_dim: int) -> dict[int, float]:
    """Hashed unigram+bigram counts; stable across runs and platforms."""
    mask = feature_dim - 1
    feats: dict[int, float] = {}
    for tok in tokens:
        idx = zlib.crc32(b"u\x00" + tok.encode("utf-8")) & mask
        feats[idx] = feats.get(idx, 0.0) + 1.0
    for a, b in zip(tokens, tokens[1:]):
        idx = zlib.crc32(b"b\x00" + a.encode("utf-8") + b"\x1f" + b.encode("utf-8")) & mask
        feats[idx] = feats.get(idx, 0.0) + 1.0
    return feats


def _sigmoid(z: float) -> float:
    z = max(min(z, _MAX_LOGIT), -_MAX_LOGIT)
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class TrainHyper:
    epochs: int = 5
    learning_rate: float = 0.2
    feature_dim: int = DEFAULT_FEATURE_DIM
    l2: float = 1e-6

    def __post_init__(self) -> None:
        if self.epochs <= 0 or self.learning_rate <= 0 or self.l2 < 0:
            raise ValidationError("epochs and learning_rate must be positive, l2 >= 0")
        if self.feature_dim < 2 or self.feature_dim & (self.feature_dim - 1):
            raise ValidationError(
                f"feature_dim must be a power of two >= 2, got {self.feature_dim}"
            )


@dataclass
class BaselineModel:
    feature_dim: int
    weights: np.ndarray
    bias: float
    seed: int
    epochs: int
    learning_rate: float
    l2: float
    final_loss: float
    ngram_orders: tuple[int, ...] = NGRAM_ORDERS
    loss_history: list[float] = field(default_factory=list, compare=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BaselineModel):
            return NotImplemented
        return (
            self.feature_dim == other.feature_dim
            and np.array_equal(self.weights, other.weights)
            and self.bias == other.bias
            and self.seed == other.seed
            and self.epochs == other.epochs
            and self.learning_rate == other.learning_rate
            and self.l2 == other.l2
            and self.final_loss == other.final_loss
        )

    def score_text_tokens(self, tokens: Sequence[str]) -> float:
        feats = hash_token_features(tokens, self.feature_dim)
        logit = self.bias + sum(self.weights[i] * v for i, v in feats.items())
        return float(_sigmoid(logit))


def regularized_loss(
    weights: np.ndarray,
    bias: float,
    features: Sequence[dict[int, float]],
    labels: Sequence[int],
    l2: float,
) -> float:
    """Mean logistic NLL plus (l2/2)*||w||^2 (bias unregularized)."""
    total = 0.0
    for feats, y in zip(features, labels):
        z = bias + sum(weights[i] * v for i, v in feats.items())
        # softplus(z) - y*z, computed stably
        total += float(np.logaddexp(0.0, z)) - y * z
    return total / len(features) + 0.5 * l2 * float(np.dot(weights, weights))


def regularized_gradient(
    weights: np.ndarray,
    bias: float,
    features: Sequence[dict[int, float]],
    labels: Sequence[int],
    l2: float,
) -> tuple[np.ndarray, float]:
    grad_w = l2 * weights.copy()
    grad_b = 0.0
    n = len(features)
    for feats, y in zip(features, labels):
        z = bias + sum(weights[i] * v for i, v in feats.items())
        err = _sigmoid(z) - y
        for i, v in feats.items():
            grad_w[i] += err * v / n
        grad_b += err / n
    return grad_w, grad_b


def train_baseline(
    train: Sequence[tuple[NormalizedInput, int]],
    hyper: TrainHyper,
    seed: int,
) -> BaselineModel:
    """Fit the baseline with seeded per-example SGD; deterministic throughout."""
    if not train:
        raise ValidationError("empty training set")
    labels = {y for _, y in train}
    if not labels <= {0, 1}:
        raise ValidationError(f"labels must be 0/1, got {sorted(labels)}")
    if len(labels) < 2:
        raise ValidationError("degenerate training set: only one class present")

    features = [hash_token_features(inp.text.split(), hyper.feature_dim) for inp, _ in train]
    ys = [y for _, y in train]

    rng = np.random.default_rng(seed)
    weights = np.zeros(hyper.feature_dim, dtype=np.float64)
    bias = 0.0
    lr = hyper.learning_rate
    history: list[float] = []
    for _ in range(hyper.epochs):
        for idx in rng.permutation(len(features)):
            feats, y = features[idx], ys[idx]
            z = bias + sum(weights[i] * v for i, v in feats.items())
            err = _sigmoid(z) - y
            # l2 applied lazily to the active coordinates of this example
            for i, v in feats.items():
                weights[i] -= lr * (err * v + hyper.l2 * weights[i])
            bias -= lr * err
        history.append(regularized_loss(weights, bias, features, ys, hyper.l2))

    return BaselineModel(
        feature_dim=hyper.feature_dim,
        weights=weights,
        bias=bias,
        seed=seed,
        epochs=hyper.epochs,
        learning_rate=lr,
        l2=hyper.l2,
        final_loss=history[-1],
        loss_history=history,
    )


def score_batch(model: BaselineModel, inputs: Sequence[NormalizedInput]) -> list[ClassifierScore]:
    if not inputs:
        raise ValidationError("score_batch requires a non-empty input batch")
    return [ClassifierScore(model.score_text_tokens(inp.text.split())) for inp in inputs]


def save_baseline(model: BaselineModel, path: str | Path) -> None:
    header = _HEADER.pack(
        _MAGIC,
        _FORMAT_VERSION,
        model.feature_dim,
        model.seed,
        model.epochs,
        model.learning_rate,
        model.l2,
        model.bias,
        model.final_loss,
        0.0,
    )
    body = np.ascontiguousarray(model.weights, dtype="<f8").tobytes()
    atomic_write_bytes(path, header + body)


def load_baseline(path: str | Path) -> BaselineModel:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise BaselineFormatError(f"{path}: truncated model file")
    magic, version, dim, seed, epochs, lr, l2, bias, final_loss, _ = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise BaselineFormatError(f"{path}: not a baseline model file")
    if version != _FORMAT_VERSION:
        raise BaselineFormatError(
            f"{path}: unsupported format version {version} (expected {_FORMAT_VERSION})"
        )
    expected = _HEADER.size + 8 * dim
    if len(raw) != expected:
        raise BaselineFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    weights = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    if not np.all(np.isfinite(weights)) or not np.isfinite(bias):
        raise BaselineFormatError(f"{path}: non-finite weights")
    return BaselineModel(
        feature_dim=dim,
        weights=weights,
        bias=bias,
        seed=seed,
        epochs=epochs,
        learning_rate=lr,
        l2=l2,
        final_loss=final_loss,
    )


@dataclass
class BaselineBackend:
    """ClassifierBackend adapter around an immutable trained BaselineModel."""

    model: BaselineModel
    backend_id: str

    def score_batch(self, inputs: Sequence[NormalizedInput]) -> list[ClassifierScore]:
        return score_batch(self.model, inputs)
