"""Dense ReLU network with hand-derived backpropagation and plain SGD.

Everything is float64. The classifier head grows row by row as new classes
are observed; rows that already exist are never touched by an expansion.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np


@dataclass
class SgdConfig:
    learning_rate: float  # 0 is allowed and makes the update a no-op

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


@dataclass
class MlpModel:
    """Hidden (W, b) pairs with ReLU activations, then a linear head.

    Hidden weights are (fan_in, fan_out); the head is (num_classes, D) so a
    class is one row and expansion appends rows.
    """

    feature_dim: int
    hidden: list[tuple[np.ndarray, np.ndarray]]
    head_w: np.ndarray
    head_b: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.head_w.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.hidden[-1][0].shape[1] if self.hidden else self.feature_dim

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in self.hidden:
            out.extend([w, b])
        out.extend([self.head_w, self.head_b])
        return out


@dataclass
class Activations:
    inputs: np.ndarray
    pre: list[np.ndarray]    # hidden pre-activations
    post: list[np.ndarray]   # hidden ReLU outputs


@dataclass
class Gradients:
    hidden: list[tuple[np.ndarray, np.ndarray]]
    head_w: np.ndarray
    head_b: np.ndarray


def _glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                    shape: tuple[int, ...]) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def new_model(feature_dim: int, hidden_sizes, num_classes: int,
              rng: np.random.Generator) -> MlpModel:
    """Fresh model with Glorot-uniform weights and zero biases."""
    hidden = []
    fan_in = feature_dim
    for fan_out in hidden_sizes:
        w = _glorot_uniform(rng, fan_in, fan_out, (fan_in, fan_out))
        hidden.append((w, np.zeros(fan_out)))
        fan_in = fan_out
    model = MlpModel(feature_dim, hidden, np.zeros((0, fan_in)), np.zeros(0))
    if num_classes:
        expand_head(model, num_classes, rng)
    return model


def forward(model: MlpModel, batch: np.ndarray) -> tuple[np.ndarray, Activations]:
    """Logits for a (batch, feature_dim) matrix plus cached intermediates."""
    if batch.ndim != 2 or batch.shape[1] != model.feature_dim:
        raise ValueError(
            f"expected batch shape (n, {model.feature_dim}), got {batch.shape}"
        )
    pre, post = [], []
    a = batch
    for w, b in model.hidden:
        z = a @ w + b
        a = np.maximum(z, 0.0)  # subgradient at 0 is 0
        pre.append(z)
        post.append(a)
    logits = a @ model.head_w.T + model.head_b
    return logits, Activations(batch, pre, post)


def backward(model: MlpModel, acts: Activations, dlogits: np.ndarray) -> Gradients:
    """Exact reverse-mode gradients for every parameter."""
    if dlogits.shape != (acts.inputs.shape[0], model.num_classes):
        raise ValueError(f"dlogits shape {dlogits.shape} does not match logits")
    embed = acts.post[-1] if model.hidden else acts.inputs
    grad_head_w = dlogits.T @ embed
    grad_head_b = dlogits.sum(axis=0)
    delta = dlogits @ model.head_w
    grad_hidden: list[tuple[np.ndarray, np.ndarray]] = []
    for layer in range(len(model.hidden) - 1, -1, -1):
        w, _ = model.hidden[layer]
        delta = delta * (acts.pre[layer] > 0.0)
        below = acts.post[layer - 1] if layer > 0 else acts.inputs
        grad_hidden.append((below.T @ delta, delta.sum(axis=0)))
        delta = delta @ w.T
    grad_hidden.reverse()
    return Gradients(grad_hidden, grad_head_w, grad_head_b)


def sgd_step(model: MlpModel, grads: Gradients, config: SgdConfig) -> MlpModel:
    """In-place p <- p - lr * g for every parameter."""
    lr = config.learning_rate
    for (w, b), (gw, gb) in zip(model.hidden, grads.hidden):
        w -= lr * gw
        b -= lr * gb
    model.head_w -= lr * grads.head_w
    model.head_b -= lr * grads.head_b
    return model


def expand_head(model: MlpModel, new_num_classes: int,
                rng: np.random.Generator) -> MlpModel:
    """Grow the head to new_num_classes rows; existing rows are untouched."""
    current = model.num_classes
    if new_num_classes < current:
        raise ValueError(f"cannot shrink head from {current} to {new_num_classes}")
    if new_num_classes == current:
        return model
    n_new = new_num_classes - current
    fresh = _glorot_uniform(rng, model.embed_dim, new_num_classes,
                            (n_new, model.embed_dim))
    model.head_w = np.vstack([model.head_w, fresh])
    model.head_b = np.concatenate([model.head_b, np.zeros(n_new)])
    return model


def clone_model(model: MlpModel) -> MlpModel:
    return MlpModel(
        model.feature_dim,
        [(w.copy(), b.copy()) for w, b in model.hidden],
        model.head_w.copy(),
        model.head_b.copy(),
    )


def models_equal(a: MlpModel, b: MlpModel) -> bool:
    if a.feature_dim != b.feature_dim or len(a.hidden) != len(b.hidden):
        return False
    for (wa, ba), (wb, bb) in zip(a.hidden, b.hidden):
        if not (np.array_equal(wa, wb) and np.array_equal(ba, bb)):
            return False
    return np.array_equal(a.head_w, b.head_w) and np.array_equal(a.head_b, b.head_b)


_CHECKPOINT_MAGIC = b"OCLM"


def save_model(model: MlpModel, path: str) -> None:
    """Checkpoint: JSON shape header followed by little-endian float64 payload."""
    arrays: list[np.ndarray] = []
    names: list[dict] = []
    for i, (w, b) in enumerate(model.hidden):
        arrays.extend([w, b])
        names.append({"name": f"hidden{i}.w", "shape": list(w.shape)})
        names.append({"name": f"hidden{i}.b", "shape": list(b.shape)})
    arrays.extend([model.head_w, model.head_b])
    names.append({"name": "head.w", "shape": list(model.head_w.shape)})
    names.append({"name": "head.b", "shape": list(model.head_b.shape)})
    header = json.dumps(
        {"feature_dim": model.feature_dim,
         "num_hidden": len(model.hidden),
         "arrays": names},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as f:
        f.write(_CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for arr in arrays:
            f.write(arr.astype("<f8").tobytes())


def load_model(path: str) -> MlpModel:
    with open(path, "rb") as f:
        if f.read(4) != _CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        (header_len,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(header_len))
        arrays = {}
        for spec in header["arrays"]:
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            buf = f.read(8 * count)
            arrays[spec["name"]] = np.frombuffer(buf, dtype="<f8").astype(
                np.float64).reshape(spec["shape"])
    hidden = [
        (arrays[f"hidden{i}.w"], arrays[f"hidden{i}.b"])
        for i in range(header["num_hidden"])
    ]
    return MlpModel(header["feature_dim"], hidden, arrays["head.w"], arrays["head.b"])
