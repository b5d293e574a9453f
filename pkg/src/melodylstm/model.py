"""Stacked-LSTM binary sequence classifier.

Two LSTM layers (64 then 8 units by default), inverted dropout between the
layers and before the dense head, and a single-logit sigmoid output.  The
forward pass keeps every activation it needs for an exact backward pass
through time; padding never influences predictions or gradients because the
layer-2 state is read at each example's last real step.
"""
from __future__ import annotations

import json
import math

import numpy as np
from dataclasses import dataclass
from scipy.special import expit

from . import kernels
from .encode import Batch
from .errors import (
    CorruptCheckpointError,
    DigestMismatchError,
    DimensionMismatchError,
    NonFiniteActivationError,
    VersionMismatchError,
    VocabMismatchError,
)
from .seeding import derive_seed

CHECKPOINT_VERSION = 1
_CHECKPOINT_KIND = "melodylstm-checkpoint"
LOSS_EPS = 1e-12


@dataclass
class LstmLayerParams:
    """One LSTM layer's weights, gates packed in (input, forget, cell, output) order."""

    w_x: np.ndarray  # [4H, D]
    w_h: np.ndarray  # [4H, H]
    b: np.ndarray    # [4H]

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_x.shape[1]

    def validate(self) -> None:
        four_h = self.w_h.shape[0]
        ok = (self.w_x.ndim == 2 and self.w_h.ndim == 2 and self.b.ndim == 1
              and self.w_x.shape[0] == four_h and self.b.shape[0] == four_h
              and four_h == 4 * self.w_h.shape[1])
        if not ok:
            raise DimensionMismatchError(
                f"inconsistent lstm layer shapes: w_x {self.w_x.shape}, "
                f"w_h {self.w_h.shape}, b {self.b.shape}")


@dataclass
class ModelParams:
    layer1: LstmLayerParams
    layer2: LstmLayerParams
    dense_w: np.ndarray  # [H2]
    dense_b: np.ndarray  # scalar
    layer1_backward: LstmLayerParams | None = None
    dropout_rate: float = 0.4

    @property
    def bidirectional(self) -> bool:
        return self.layer1_backward is not None

    @property
    def input_size(self) -> int:
        return self.layer1.input_size

    def validate(self) -> None:
        self.layer1.validate()
        self.layer2.validate()
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DimensionMismatchError(
                f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        width = self.layer1.hidden_size
        if self.layer1_backward is not None:
            self.layer1_backward.validate()
            if (self.layer1_backward.input_size != self.layer1.input_size
                    or self.layer1_backward.hidden_size != width):
                raise DimensionMismatchError(
                    "backward-direction layer shapes differ from forward")
            width *= 2
        if self.layer2.input_size != width:
            raise DimensionMismatchError(
                f"layer2 expects input {self.layer2.input_size}, layer1 emits {width}")
        if self.dense_w.shape != (self.layer2.hidden_size,):
            raise DimensionMismatchError(
                f"dense weights {self.dense_w.shape} do not match "
                f"layer2 hidden size {self.layer2.hidden_size}")
        if np.ndim(self.dense_b) != 0:
            raise DimensionMismatchError("dense bias must be a scalar")

    def arrays(self) -> dict[str, np.ndarray]:
        """Named live views of every trainable array, in a fixed order."""
        out = {
            "layer1.w_x": self.layer1.w_x,
            "layer1.w_h": self.layer1.w_h,
            "layer1.b": self.layer1.b,
        }
        if self.layer1_backward is not None:
            out["layer1_backward.w_x"] = self.layer1_backward.w_x
            out["layer1_backward.w_h"] = self.layer1_backward.w_h
            out["layer1_backward.b"] = self.layer1_backward.b
        out["layer2.w_x"] = self.layer2.w_x
        out["layer2.w_h"] = self.layer2.w_h
        out["layer2.b"] = self.layer2.b
        out["dense_w"] = self.dense_w
        out["dense_b"] = self.dense_b
        return out

    def copy(self) -> "ModelParams":
        def dup(layer):
            return LstmLayerParams(layer.w_x.copy(), layer.w_h.copy(), layer.b.copy())

        return ModelParams(
            dup(self.layer1), dup(self.layer2),
            self.dense_w.copy(), self.dense_b.copy(),
            dup(self.layer1_backward) if self.layer1_backward is not None else None,
            self.dropout_rate)

    def astype(self, dtype) -> "ModelParams":
        def cast(layer):
            return LstmLayerParams(layer.w_x.astype(dtype), layer.w_h.astype(dtype),
                                   layer.b.astype(dtype))

        return ModelParams(
            cast(self.layer1), cast(self.layer2),
            self.dense_w.astype(dtype), self.dense_b.astype(dtype),
            cast(self.layer1_backward) if self.layer1_backward is not None else None,
            self.dropout_rate)


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _init_layer(rng: np.random.Generator, input_dim: int, hidden: int) -> LstmLayerParams:
    four_h = 4 * hidden
    limit = math.sqrt(6.0 / (input_dim + four_h))
    w_x = rng.uniform(-limit, limit, size=(four_h, input_dim))
    w_h = np.vstack([_orthogonal(rng, hidden) for _ in range(4)])
    b = np.zeros(four_h)
    b[hidden:2 * hidden] = 1.0  # forget gates start open
    return LstmLayerParams(w_x, w_h, b)


def init_params(input_dim: int, hidden1: int = 64, hidden2: int = 8, *,
                seed: int = 0, bidirectional: bool = False,
                dropout_rate: float = 0.4) -> ModelParams:
    """Fresh parameters: uniform input weights, orthogonal recurrences, forget bias 1."""
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "init")))
    layer1 = _init_layer(rng, input_dim, hidden1)
    layer1_backward = _init_layer(rng, input_dim, hidden1) if bidirectional else None
    width = hidden1 * (2 if bidirectional else 1)
    layer2 = _init_layer(rng, width, hidden2)
    limit = math.sqrt(6.0 / (hidden2 + 1))
    dense_w = rng.uniform(-limit, limit, size=hidden2)
    params = ModelParams(layer1, layer2, dense_w, np.zeros(()),
                         layer1_backward, dropout_rate)
    params.validate()
    return params


def lstm_cell(x: np.ndarray, h: np.ndarray, c: np.ndarray,
              p: LstmLayerParams) -> tuple[np.ndarray, np.ndarray]:
    """One recurrence step for a single example; returns (h', c')."""
    hidden = p.hidden_size
    if x.shape != (p.input_size,) or h.shape != (hidden,) or c.shape != (hidden,):
        raise DimensionMismatchError(
            f"cell inputs x{x.shape} h{h.shape} c{c.shape} do not match layer "
            f"(D={p.input_size}, H={hidden})")
    pre = p.w_x @ x + p.w_h @ h + p.b
    gi = expit(pre[:hidden])
    gf = expit(pre[hidden:2 * hidden])
    gg = np.tanh(pre[2 * hidden:3 * hidden])
    go = expit(pre[3 * hidden:])
    c_next = gf * c + gi * gg
    return go * np.tanh(c_next), c_next


def _reverse_time(arr: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Reverse the first lengths[n] steps of each example; pad steps become zero.

    The mapping is its own inverse on the real steps, so the same call
    un-reverses outputs and re-reverses gradients.
    """
    t_steps = arr.shape[0]
    src = lengths[None, :] - 1 - np.arange(t_steps)[:, None]
    valid = src >= 0
    out = arr[np.maximum(src, 0), np.arange(arr.shape[1])[None, :]]
    out[~valid] = 0.0
    return np.ascontiguousarray(out)


def _layer_preact(xin: np.ndarray, layer: LstmLayerParams) -> np.ndarray:
    t_steps, batch, _ = xin.shape
    xp = xin.reshape(t_steps * batch, -1) @ layer.w_x.T + layer.b
    if not np.isfinite(xp).all():
        raise NonFiniteActivationError("non-finite LSTM pre-activations")
    return np.ascontiguousarray(xp.reshape(t_steps, batch, -1))


def forward(batch: Batch, p: ModelParams, mode: str = "eval",
            rng_seed: int = 0) -> tuple[np.ndarray, dict]:
    """Probabilities of label 1 for a batch, plus the activation cache.

    Train mode draws fresh inverted-dropout masks from rng_seed (one per
    layer-1 timestep, one for the selected layer-2 state); eval mode is
    deterministic and ignores the seed.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    p.validate()
    if batch.step_size != p.input_size:
        raise DimensionMismatchError(
            f"batch steps have dimension {batch.step_size}, "
            f"model expects {p.input_size}")
    dtype = p.dense_w.dtype
    x = np.ascontiguousarray(batch.x.transpose(1, 0, 2), dtype=dtype)
    lengths = np.asarray(batch.lengths, dtype=np.int64)
    t_steps, n, _ = x.shape

    train = mode == "train" and p.dropout_rate > 0.0
    rng = np.random.Generator(np.random.PCG64(rng_seed)) if train else None
    keep = 1.0 - p.dropout_rate

    def dropmul(shape):
        # mask already folded with the 1/keep rescale of inverted dropout
        return (rng.random(shape) < keep).astype(dtype) / dtype.type(keep)

    acts1 = kernels.lstm_forward(_layer_preact(x, p.layer1), p.layer1.w_h)
    h1 = acts1[3]
    if p.bidirectional:
        xrev = _reverse_time(x, lengths)
        acts1b = kernels.lstm_forward(
            _layer_preact(xrev, p.layer1_backward), p.layer1_backward.w_h)
        h1full = np.concatenate([h1, _reverse_time(acts1b[3], lengths)], axis=2)
    else:
        xrev = None
        acts1b = None
        h1full = h1

    m1 = dropmul(h1full.shape) if train else None
    h1d = h1full * m1 if m1 is not None else h1full

    acts2 = kernels.lstm_forward(_layer_preact(h1d, p.layer2), p.layer2.w_h)
    sel = (lengths - 1, np.arange(n))
    hlast = acts2[3][sel]
    m2 = dropmul(hlast.shape) if train else None
    hlast_d = hlast * m2 if m2 is not None else hlast

    logit = hlast_d @ p.dense_w + p.dense_b
    if not np.isfinite(logit).all():
        raise NonFiniteActivationError("non-finite classifier logits")
    probs = expit(logit)

    cache = {
        "mode": mode, "x": x, "xrev": xrev, "lengths": lengths,
        "acts1": acts1, "acts1b": acts1b, "m1": m1, "h1d": h1d,
        "acts2": acts2, "sel": sel, "m2": m2, "hlast_d": hlast_d,
        "probs": probs,
    }
    return probs, cache


def _weight_per_example(labels: np.ndarray, class_weights, dtype) -> np.ndarray:
    w0, w1 = (1.0, 1.0) if class_weights is None else class_weights
    return np.where(labels == 1, dtype.type(w1), dtype.type(w0))


def loss(probs: np.ndarray, labels, class_weights=None) -> float:
    """Class-weighted binary cross-entropy, averaged over examples."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    w = _weight_per_example(labels, class_weights, probs.dtype)
    clipped = np.clip(probs, LOSS_EPS, 1.0 - LOSS_EPS)
    per = -w * np.where(labels == 1, np.log(clipped), np.log1p(-clipped))
    return float(per.mean())


def backward(cache: dict, labels, p: ModelParams, class_weights=None) -> dict[str, np.ndarray]:
    """Exact loss gradients for every parameter array, keyed as in ModelParams.arrays()."""
    probs = cache["probs"]
    labels = np.asarray(labels)
    n = probs.shape[0]
    w = _weight_per_example(labels, class_weights, probs.dtype)
    dlogit = w * (probs - labels.astype(probs.dtype)) / probs.dtype.type(n)

    hlast_d = cache["hlast_d"]
    grads: dict[str, np.ndarray] = {}
    grads["dense_w"] = hlast_d.T @ dlogit
    grads["dense_b"] = np.asarray(dlogit.sum())

    dhlast = dlogit[:, None] * p.dense_w[None, :]
    if cache["m2"] is not None:
        dhlast = dhlast * cache["m2"]

    gates2, cells2, tanhc2, hout2 = cache["acts2"]
    dh2 = np.zeros_like(hout2)
    dh2[cache["sel"]] = dhlast
    dxp2, dw_h2 = kernels.lstm_backward(dh2, gates2, cells2, tanhc2, hout2,
                                        p.layer2.w_h)
    t_steps, batch = dxp2.shape[0], dxp2.shape[1]
    flat = t_steps * batch
    grads["layer2.w_x"] = dxp2.reshape(flat, -1).T @ cache["h1d"].reshape(flat, -1)
    grads["layer2.w_h"] = dw_h2
    grads["layer2.b"] = dxp2.sum(axis=(0, 1))

    dh1full = (dxp2.reshape(flat, -1) @ p.layer2.w_x).reshape(t_steps, batch, -1)
    if cache["m1"] is not None:
        dh1full = dh1full * cache["m1"]

    width = p.layer1.hidden_size
    if p.bidirectional:
        dh1 = np.ascontiguousarray(dh1full[:, :, :width])
        dh1b = _reverse_time(dh1full[:, :, width:], cache["lengths"])
        gates1b, cells1b, tanhc1b, hout1b = cache["acts1b"]
        dxp1b, dw_h1b = kernels.lstm_backward(dh1b, gates1b, cells1b, tanhc1b,
                                              hout1b, p.layer1_backward.w_h)
        grads["layer1_backward.w_x"] = (dxp1b.reshape(flat, -1).T
                                        @ cache["xrev"].reshape(flat, -1))
        grads["layer1_backward.w_h"] = dw_h1b
        grads["layer1_backward.b"] = dxp1b.sum(axis=(0, 1))
    else:
        dh1 = dh1full

    gates1, cells1, tanhc1, hout1 = cache["acts1"]
    dxp1, dw_h1 = kernels.lstm_backward(dh1, gates1, cells1, tanhc1, hout1,
                                        p.layer1.w_h)
    grads["layer1.w_x"] = dxp1.reshape(flat, -1).T @ cache["x"].reshape(flat, -1)
    grads["layer1.w_h"] = dw_h1
    grads["layer1.b"] = dxp1.sum(axis=(0, 1))
    return grads


def predict(params: ModelParams, sequences: Batch,
            threshold: float = 0.5) -> list[tuple[int, float]]:
    """Eval-mode (label, probability) per example; prob == threshold maps to 1."""
    if sequences.step_size != params.input_size:
        raise VocabMismatchError(
            f"sequences encode to dimension {sequences.step_size}, "
            f"model expects {params.input_size}")
    probs, _ = forward(sequences, params, mode="eval")
    return [(int(prob >= threshold), float(prob)) for prob in probs]


def save_checkpoint(params: ModelParams, vocab_digest: str) -> bytes:
    params.validate()
    payload = {
        "kind": _CHECKPOINT_KIND,
        "version": CHECKPOINT_VERSION,
        "vocab_digest": vocab_digest,
        "dropout_rate": params.dropout_rate,
        "bidirectional": params.bidirectional,
        "dims": {
            "input": params.layer1.input_size,
            "hidden1": params.layer1.hidden_size,
            "hidden2": params.layer2.hidden_size,
        },
        "arrays": {name: arr.tolist() for name, arr in params.arrays().items()},
    }
    return json.dumps(payload, sort_keys=True).encode("utf-8")


def load_checkpoint(data: bytes,
                    expected_vocab_digest: str | None = None) -> tuple[ModelParams, str]:
    """Rebuild ModelParams from save_checkpoint bytes; returns (params, vocab digest)."""
    try:
        payload = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptCheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("kind") != _CHECKPOINT_KIND:
        raise CorruptCheckpointError("not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"checkpoint version {payload.get('version')!r}, "
            f"this build reads version {CHECKPOINT_VERSION}")
    digest = payload.get("vocab_digest")
    if expected_vocab_digest is not None and digest != expected_vocab_digest:
        raise DigestMismatchError(
            "checkpoint was trained with a different vocabulary "
            f"(digest {digest!r}, expected {expected_vocab_digest!r})")

    try:
        dims = payload["dims"]
        input_dim = int(dims["input"])
        hidden1 = int(dims["hidden1"])
        hidden2 = int(dims["hidden2"])
        bidirectional = bool(payload["bidirectional"])
        dropout_rate = float(payload["dropout_rate"])
        raw = payload["arrays"]

        def arr(name):
            return np.asarray(raw[name], dtype=np.float64)

        def layer(prefix):
            return LstmLayerParams(arr(prefix + ".w_x"), arr(prefix + ".w_h"),
                                   arr(prefix + ".b"))

        params = ModelParams(
            layer("layer1"), layer("layer2"),
            arr("dense_w"), arr("dense_b"),
            layer("layer1_backward") if bidirectional else None,
            dropout_rate)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpointError(f"malformed checkpoint field: {exc}") from exc

    width = hidden1 * (2 if bidirectional else 1)
    expected_shapes = {
        "layer1.w_x": (4 * hidden1, input_dim),
        "layer1.w_h": (4 * hidden1, hidden1),
        "layer1.b": (4 * hidden1,),
        "layer2.w_x": (4 * hidden2, width),
        "layer2.w_h": (4 * hidden2, hidden2),
        "layer2.b": (4 * hidden2,),
        "dense_w": (hidden2,),
        "dense_b": (),
    }
    if bidirectional:
        expected_shapes["layer1_backward.w_x"] = (4 * hidden1, input_dim)
        expected_shapes["layer1_backward.w_h"] = (4 * hidden1, hidden1)
        expected_shapes["layer1_backward.b"] = (4 * hidden1,)
    for name, array in params.arrays().items():
        if array.shape != expected_shapes[name]:
            raise DimensionMismatchError(
                f"checkpoint array {name} has shape {array.shape}, "
                f"dims metadata implies {expected_shapes[name]}")
    params.validate()
    return params, digest
