"""Seeded Adam training loop with early stopping on validation accuracy."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model
from .encode import Batch
from .errors import DivergedError, NonFiniteActivationError
from .seeding import derive_seed


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    class_weight_0: float | None = None  # None: inverse class frequency
    class_weight_1: float | None = None
    validation_fraction: float = 0.4
    early_stop_patience: int = 10
    dropout_rate: float = 0.4
    hidden1: int = 64
    hidden2: int = 8
    bidirectional: bool = False
    precision: str = "float64"


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


def history_to_csv(history: list[EpochStats]) -> str:
    lines = [",".join(HISTORY_COLUMNS)]
    for row in history:
        lines.append(f"{row.epoch},{row.train_loss!r},{row.train_acc!r},"
                     f"{row.val_loss!r},{row.val_acc!r}")
    return "\n".join(lines) + "\n"


class Adam:
    """Adam with bias correction, updating parameter arrays in place."""

    def __init__(self, arrays: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(a) for name, a in arrays.items()}
        self.v = {name: np.zeros_like(a) for name, a in arrays.items()}

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, arr in arrays.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            arr -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def resolve_class_weights(labels: np.ndarray, config: TrainConfig) -> tuple[float, float]:
    """Explicit weights win; otherwise balance by inverse class frequency."""
    if config.class_weight_0 is None and config.class_weight_1 is None:
        n = labels.size
        n1 = int((labels == 1).sum())
        n0 = n - n1
        w0 = n / (2.0 * n0) if n0 else 1.0
        w1 = n / (2.0 * n1) if n1 else 1.0
        return w0, w1
    w0 = 1.0 if config.class_weight_0 is None else float(config.class_weight_0)
    w1 = 1.0 if config.class_weight_1 is None else float(config.class_weight_1)
    return w0, w1


def _epoch_metrics(batch: Batch, params, weights) -> tuple[float, float]:
    probs, _ = model.forward(batch, params, mode="eval")
    labels = np.asarray(batch.labels)
    acc = float(((probs >= 0.5).astype(np.int64) == labels).mean())
    return model.loss(probs, labels, weights), acc


def train(train_set: Batch, val_set: Batch,
          config: TrainConfig) -> tuple[model.ModelParams, list[EpochStats]]:
    """Fit the classifier; returns the best-validation-accuracy parameters.

    History rows hold eval-mode loss/accuracy over the full train and
    validation sets after each epoch's updates.  Raises Diverged with the
    last good parameters and partial history if the loss leaves the finite
    range.
    """
    if train_set.labels is None or val_set.labels is None:
        raise ValueError("train and validation batches need labels")
    if config.precision not in ("float64", "float32"):
        raise ValueError(f"precision must be float64 or float32, got {config.precision!r}")

    params = model.init_params(
        train_set.step_size, config.hidden1, config.hidden2,
        seed=config.seed, bidirectional=config.bidirectional,
        dropout_rate=config.dropout_rate)
    if config.precision == "float32":
        params = params.astype(np.float32)

    labels = np.asarray(train_set.labels)
    weights = resolve_class_weights(labels, config)
    arrays = params.arrays()
    opt = Adam(arrays, config.learning_rate, config.beta1, config.beta2, config.eps)
    shuffle_rng = np.random.Generator(
        np.random.PCG64(derive_seed(config.seed, "shuffle")))

    history: list[EpochStats] = []
    best_params = params.copy()
    best_acc = -1.0
    stale = 0
    n = len(train_set.lengths)

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            piece = train_set.take(order[start:start + config.batch_size])
            mask_seed = derive_seed(config.seed, f"dropout:{epoch}:{start}")
            try:
                probs, cache = model.forward(piece, params, mode="train",
                                             rng_seed=mask_seed)
            except NonFiniteActivationError as exc:
                raise DivergedError(f"epoch {epoch}: {exc}",
                                    params=best_params, history=history) from exc
            batch_loss = model.loss(probs, piece.labels, weights)
            if not math.isfinite(batch_loss):
                raise DivergedError(f"epoch {epoch}: non-finite loss",
                                    params=best_params, history=history)
            grads = model.backward(cache, piece.labels, params, weights)
            opt.step(arrays, grads)

        train_loss, train_acc = _epoch_metrics(train_set, params, weights)
        val_loss, val_acc = _epoch_metrics(val_set, params, weights)
        history.append(EpochStats(epoch, train_loss, train_acc, val_loss, val_acc))

        if val_acc > best_acc:
            best_acc = val_acc
            best_params = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                break
    return best_params, history
