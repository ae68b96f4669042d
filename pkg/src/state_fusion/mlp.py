"""From-scratch feedforward network with soft-max cross-entropy training.

Used for the two fusion classifiers and the correctness selectors. Plain
mini-batch gradient descent, ReLU hidden layers, deterministic given the
config seed: weight init draws from the "init" stream, per-epoch shuffles
from the "shuffle" stream. Training keeps the parameters with the best
validation loss and stops early after `patience` non-improving epochs.

All math is float64 numpy. The backward pass is hand-written; tests check
it against central finite differences.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .seeding import rng_for


class MlpError(Exception):
    """Configuration or dimension problem."""


class TrainingDivergedError(MlpError):
    """Loss became non-finite; carries the partial TrainReport."""

    def __init__(self, message: str, report: "TrainReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    output_dim: int
    hidden_dims: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise MlpError("all layer dimensions must be >= 1")
        if self.activation != "relu":
            raise MlpError(f"only the rectifier activation is supported, got {self.activation!r}")
        if self.learning_rate <= 0:
            raise MlpError("learning_rate must be > 0")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise MlpError("batch_size, max_epochs, and patience must be >= 1")

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_dims, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class MlpModel:
    """Per-layer weights (fan_in, fan_out) and biases (fan_out,)."""

    config: MlpConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        expected = self.config.layer_dims()
        shapes = [w.shape for w in self.weights]
        if shapes != expected:
            raise MlpError(f"weight shapes {shapes} do not chain as {expected}")
        for w, b, (_, fan_out) in zip(self.weights, self.biases, expected):
            if b.shape != (fan_out,):
                raise MlpError(f"bias shape {b.shape} does not match fan-out {fan_out}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise MlpError("parameters must be finite")

    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpModel":
        return MlpModel(self.config, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class TrainReport:
    epochs_run: int
    final_train_loss: float
    best_val_loss: float
    train_loss_curve: list[float] = field(default_factory=list)
    val_loss_curve: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def init(config: MlpConfig) -> MlpModel:
    """Zero-mean weights scaled by 1/sqrt(fan_in); biases zero."""
    rng = rng_for(config.seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in config.layer_dims():
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(config, weights, biases)


def _check_features(model: MlpModel, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if x.shape[-1] != model.config.input_dim:
        raise MlpError(f"feature length {x.shape[-1]} does not match input_dim {model.config.input_dim}")
    return x


def _forward_batch(model: MlpModel, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Returns (per-layer activations incl. input, log-probabilities)."""
    activations = [x]
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        x = np.maximum(x @ w + b, 0.0)
        activations.append(x)
    logits = x @ model.weights[-1] + model.biases[-1]
    logits = logits - logits.max(axis=1, keepdims=True)
    log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    return activations, log_probs


def forward(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Soft-max output; accepts a single feature vector or a batch."""
    x = _check_features(model, features)
    single = x.ndim == 1
    _, log_probs = _forward_batch(model, x[None, :] if single else x)
    probs = np.exp(log_probs)
    return probs[0] if single else probs


def loss(model: MlpModel, features: np.ndarray, true_index: int) -> float:
    """Cross-entropy -log p(true class) for one sample."""
    if not 0 <= true_index < model.config.output_dim:
        raise MlpError(f"true_index {true_index} out of range for {model.config.output_dim} classes")
    x = _check_features(model, features)
    _, log_probs = _forward_batch(model, x[None, :])
    return float(-log_probs[0, true_index])


def mean_loss(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy over a batch."""
    x = _check_features(model, np.atleast_2d(features))
    y = np.asarray(labels, dtype=int)
    _, log_probs = _forward_batch(model, x)
    return float(-log_probs[np.arange(len(y)), y].mean())


def gradient(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Gradients of the mean batch loss for every weight and bias."""
    x = _check_features(model, np.atleast_2d(features))
    y = np.asarray(labels, dtype=int)
    if x.shape[0] == 0:
        raise MlpError("gradient needs a non-empty batch")
    n = x.shape[0]
    activations, log_probs = _forward_batch(model, x)
    # d mean_loss / d logits = (softmax - one_hot) / n
    delta = np.exp(log_probs)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grad_w = [np.empty(0)] * len(model.weights)
    grad_b = [np.empty(0)] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        grad_w[layer] = activations[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (activations[layer] > 0)
    return grad_w, grad_b


def train(
    model: MlpModel,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
) -> tuple[MlpModel, TrainReport]:
    """Mini-batch gradient descent with best-validation checkpointing."""
    cfg = model.config
    x_train, y_train = np.atleast_2d(train_data[0]), np.asarray(train_data[1], dtype=int)
    x_val, y_val = np.atleast_2d(val_data[0]), np.asarray(val_data[1], dtype=int)
    if len(x_train) == 0 or len(x_val) == 0:
        raise MlpError("train and validation splits must be non-empty")
    _check_features(model, x_train)
    _check_features(model, x_val)

    model = model.copy()
    rng = rng_for(cfg.seed, "shuffle")
    best = model.copy()
    best_val = np.inf
    since_best = 0
    train_curve: list[float] = []
    val_curve: list[float] = []

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(x_train))
        batch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            batch_losses.append(mean_loss(model, xb, yb))
            grad_w, grad_b = gradient(model, xb, yb)
            for w, b, gw, gb in zip(model.weights, model.biases, grad_w, grad_b):
                w -= cfg.learning_rate * gw
                b -= cfg.learning_rate * gb
        epoch_train = float(np.mean(batch_losses))
        epoch_val = mean_loss(model, x_val, y_val)
        train_curve.append(epoch_train)
        val_curve.append(epoch_val)
        if not (np.isfinite(epoch_train) and np.isfinite(epoch_val)):
            report = TrainReport(epoch + 1, epoch_train, best_val, train_curve, val_curve)
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch + 1}", report)
        if epoch_val < best_val:
            best_val = epoch_val
            best = model.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    report = TrainReport(
        epochs_run=len(train_curve),
        final_train_loss=train_curve[-1],
        best_val_loss=best_val,
        train_loss_curve=train_curve,
        val_loss_curve=val_curve,
    )
    return best, report


def predict(model: MlpModel, features: np.ndarray) -> tuple[int, np.ndarray]:
    """Class index (ties to the lowest index) plus the full distribution."""
    probs = forward(model, features)
    if probs.ndim != 1:
        raise MlpError("predict takes a single feature vector")
    return int(np.argmax(probs)), probs


def save_model(model: MlpModel, path: str | Path, catalog_fingerprint: str | None = None) -> None:
    payload = {
        "config": asdict(model.config),
        "catalog_fingerprint": catalog_fingerprint,
        "layers": [
            {
                "shape": list(w.shape),
                "weights": w.ravel(order="C").tolist(),
                "biases": b.tolist(),
            }
            for w, b in zip(model.weights, model.biases)
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> tuple[MlpModel, str | None]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    raw_cfg = dict(data["config"])
    raw_cfg["hidden_dims"] = tuple(raw_cfg["hidden_dims"])
    config = MlpConfig(**raw_cfg)
    weights, biases = [], []
    for layer in data["layers"]:
        shape = tuple(layer["shape"])
        weights.append(np.array(layer["weights"], dtype=float).reshape(shape, order="C"))
        biases.append(np.array(layer["biases"], dtype=float))
    return MlpModel(config, weights, biases), data.get("catalog_fingerprint")
