"""Softmax perceptron readout trained with minibatch SGD."""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODEL_FORMAT_VERSION = 1


class ReadoutError(ValueError):
    pass


@dataclass(frozen=True)
class ReadoutConfig:
    learning_rate: float = 0.01
    epochs: int = 20
    batch_size: int = 32

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("learning_rate must be > 0, epochs and batch_size >= 1")


@dataclass
class PerceptronModel:
    weights: np.ndarray   # (classes, features)
    bias: np.ndarray      # (classes,)
    config: ReadoutConfig = field(default_factory=ReadoutConfig)
    seed: int = 0
    loss_history: list[float] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def scores(self, states) -> np.ndarray:
        x = np.asarray(states, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ReadoutError(
                f"states have shape {x.shape}, model expects (n, {self.n_features})"
            )
        return x @ self.weights.T + self.bias

    def predict(self, states) -> np.ndarray:
        # np.argmax returns the first maximum, so ties go to the lowest class id
        return np.argmax(self.scores(states), axis=1)

    def save(self, path: str | Path) -> None:
        buf = io.BytesIO()
        header = {"config": self.config.__dict__, "seed": self.seed,
                  "loss_history": self.loss_history}
        np.savez(buf, format_version=np.array(MODEL_FORMAT_VERSION), weights=self.weights,
                 bias=self.bias, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8))
        Path(path).write_bytes(buf.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> "PerceptronModel":
        with np.load(path) as z:
            version = int(z["format_version"])
            if version != MODEL_FORMAT_VERSION:
                raise ReadoutError(f"{path}: unsupported model format {version}")
            header = json.loads(z["header"].tobytes())
            return cls(z["weights"].copy(), z["bias"].copy(), ReadoutConfig(**header["config"]),
                       header["seed"], header["loss_history"])


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(weights, bias, x, y):
    """Summed cross-entropy over the rows of ``x`` and its gradients.

    Summing rather than averaging makes the learning rate a per-example step
    size, the same as plain one-example-at-a-time SGD.
    """
    with np.errstate(over="ignore", invalid="ignore"):  # caught by the finite-loss check
        p = softmax(x @ weights.T + bias)
    n = len(y)
    loss = -np.sum(np.log(np.clip(p[np.arange(n), y], 1e-300, None)))
    p[np.arange(n), y] -= 1.0
    return loss, p.T @ x, p.sum(axis=0)


def _check(states, labels):
    x = np.asarray(states, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) == 0:
        raise ReadoutError("need a non-empty 2-D array of liquid states")
    if len(y) != len(x):
        raise ReadoutError(f"{len(x)} states but {len(y)} labels")
    if y.min() < 0:
        raise ReadoutError("labels must be non-negative class ids")
    return x, y


def train(states, labels, config: ReadoutConfig | None = None, seed: int = 0,
          n_classes: int | None = None) -> PerceptronModel:
    """Fit from zero weights; the minibatch order is shuffled each epoch by ``seed``."""
    config = config or ReadoutConfig()
    x, y = _check(states, labels)
    k = n_classes if n_classes is not None else int(y.max()) + 1
    if y.max() >= k:
        raise ReadoutError(f"label {y.max()} out of range for {k} classes")
    w = np.zeros((k, x.shape[1]))
    b = np.zeros(k)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, gw, gb = loss_and_grad(w, b, x[idx], y[idx])
            if not np.isfinite(loss):
                raise ReadoutError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}; "
                    f"max |w| = {np.abs(w).max():.3g}, lr = {config.learning_rate}"
                )
            w -= config.learning_rate * gw
            b -= config.learning_rate * gb
        history.append(float(loss_and_grad(w, b, x, y)[0]) / len(x))
    return PerceptronModel(w, b, config, seed, history)


def evaluate(model: PerceptronModel, states, labels) -> float:
    """Fraction of argmax-correct predictions."""
    x = np.asarray(states, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ReadoutError("cannot evaluate on an empty test set")
    if len(y) != len(x):
        raise ReadoutError(f"{len(x)} states but {len(y)} labels")
    return float(np.mean(model.predict(x) == y))
