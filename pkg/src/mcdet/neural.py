"""Shallow feedforward baselines over sliding sample windows.

Two fixed architectures are benchmarked: hidden layers [128, 64] (the larger
window detector) and [32, 16] (the compact variant), both ReLU inside with a
single logistic output.  The input for symbol k is the window of the last W
raw occupancy samples ending at that symbol's boundary, zero-padded at the
start of the sequence; W scales with the symbol interval, so the trainable
parameter count is 128 W + 8449 for the larger net and 32 W + 577 for the
compact one.

Training is plain mini-batch gradient descent on binary cross-entropy,
deterministic under the configured seed.  Gradients are exact backprop; the
test suite checks them against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .channel import Trace

__all__ = [
    "DivergenceError",
    "WindowTooLargeError",
    "MlpConfig",
    "MlpModel",
    "windowize",
    "build",
    "train",
    "predict",
    "decide",
    "loss_and_gradients",
    "save_mlp",
    "load_mlp",
]

MLP_HIDDEN = (128, 64)
ANN_HIDDEN = (32, 16)


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training loss became non-finite at epoch {epoch}")


class WindowTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class MlpConfig:
    window: int
    hidden: tuple[int, ...] = MLP_HIDDEN
    learning_rate: float = 0.05
    epochs: int = 150
    batch_size: int = 64
    rng_seed: int = 0

    def validate(self) -> None:
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden sizes must all be >= 1, got {self.hidden}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass(frozen=True)
class MlpModel:
    """Layer weights/biases plus bookkeeping; weights[i] has shape (out, in)."""

    config: MlpConfig
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    final_loss: float = float("nan")

    def __post_init__(self):
        for w in self.weights:
            w.setflags(write=False)
        for b in self.biases:
            b.setflags(write=False)

    @property
    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def windowize(trace: Trace, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-symbol input windows of raw samples, plus the bit labels.

    Row k holds samples (k+1)*spb - window .. (k+1)*spb - 1 in time order,
    zero-padded on the left when the sequence has not yet produced enough
    history.
    """
    trace.validate()
    counts = np.asarray(trace.counts, dtype=float)
    if window > len(counts):
        raise WindowTooLargeError(
            f"window {window} exceeds the {len(counts)} available samples"
        )
    spb = trace.samples_per_symbol
    n_symbols = len(trace.bits)
    padded = np.concatenate([np.zeros(window), counts])
    ends = (np.arange(1, n_symbols + 1) * spb) + window
    idx = ends[:, None] - window + np.arange(window)[None, :]
    return padded[idx], np.asarray(trace.bits, dtype=np.int8).copy()


def build(cfg: MlpConfig) -> MlpModel:
    """ReLU hidden layers and a sigmoid output, uniform 1/sqrt(fan_in) init."""
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence(cfg.rng_seed))
    dims = (cfg.window, *cfg.hidden, 1)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(config=cfg, weights=tuple(weights), biases=tuple(biases))


def _forward_raw(
    weights, biases, x: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Batch forward pass; returns layer activations and output logits."""
    acts = [x]
    a = x
    for i in range(len(weights) - 1):
        a = np.maximum(a @ weights[i].T + biases[i], 0.0)
        acts.append(a)
    logits = (a @ weights[-1].T + biases[-1]).ravel()
    return acts, logits


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _loss_and_gradients_raw(
    weights, biases, x: np.ndarray, y: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    acts, logits = _forward_raw(weights, biases, x)
    # Stable BCE through the logits: softplus(z) - y z.
    loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))
    n = len(y)
    delta = ((_sigmoid(logits) - y) / n)[:, None]
    grads_w: list[np.ndarray] = [np.empty(0)] * len(weights)
    grads_b: list[np.ndarray] = [np.empty(0)] * len(biases)
    for i in range(len(weights) - 1, -1, -1):
        grads_w[i] = delta.T @ acts[i]
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i]) * (acts[i] > 0)
    return loss, grads_w, grads_b


def loss_and_gradients(
    model: MlpModel, x: np.ndarray, y: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean binary cross-entropy and its exact backprop gradients for a batch."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    return _loss_and_gradients_raw(list(model.weights), list(model.biases), x, y)


def train(
    model: MlpModel, windows: np.ndarray, labels: np.ndarray, cfg: MlpConfig | None = None
) -> MlpModel:
    """Mini-batch gradient descent on binary cross-entropy.

    Deterministic under the config seed (a dedicated generator drives the
    epoch shuffles).  Raises DivergenceError, naming the epoch, if the loss
    stops being finite.  Zero epochs return the model unchanged.
    """
    if cfg is None:
        cfg = model.config
    windows = np.asarray(windows, dtype=float)
    labels = np.asarray(labels, dtype=float).ravel()
    if windows.shape[0] != len(labels):
        raise ValueError(
            f"{windows.shape[0]} windows but {len(labels)} labels"
        )
    if cfg.epochs == 0:
        return model
    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, 1]))
    n = len(labels)
    final_loss = float("nan")
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads_w, grads_b = _loss_and_gradients_raw(
                weights, biases, windows[batch], labels[batch]
            )
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            epoch_loss += loss * len(batch)
            for i in range(len(weights)):
                weights[i] -= cfg.learning_rate * grads_w[i]
                biases[i] -= cfg.learning_rate * grads_b[i]
        final_loss = epoch_loss / n
    return replace(
        model,
        weights=tuple(weights),
        biases=tuple(biases),
        final_loss=final_loss,
    )


def predict(model: MlpModel, windows: np.ndarray) -> np.ndarray:
    """Sigmoid output scores in (0, 1), one per window."""
    windows = np.atleast_2d(np.asarray(windows, dtype=float))
    if windows.shape[1] != model.config.window:
        raise ValueError(
            f"windows have {windows.shape[1]} samples, model expects "
            f"{model.config.window}"
        )
    _, logits = _forward_raw(list(model.weights), list(model.biases), windows)
    return _sigmoid(logits)


def decide(scores: np.ndarray) -> np.ndarray:
    return (np.asarray(scores) > 0.5).astype(np.int8)


# ---------------------------------------------------------------------------
# Model file format: "mcdet-mlp-model,1", layer dims line, then one line of
# row-major weights and one of biases per layer (repr precision).
# ---------------------------------------------------------------------------

_MLP_MAGIC = "mcdet-mlp-model"
_MLP_VERSION = 1


def save_mlp(model: MlpModel, path: str | Path) -> Path:
    path = Path(path)
    cfg = model.config
    lines = [f"{_MLP_MAGIC},{_MLP_VERSION}"]
    dims = [cfg.window, *cfg.hidden, 1]
    lines.append("dims," + ",".join(str(d) for d in dims))
    lines.append(
        f"train,{cfg.learning_rate!r},{cfg.epochs},{cfg.batch_size},{cfg.rng_seed}"
    )
    lines.append(f"final_loss,{model.final_loss!r}")
    for w, b in zip(model.weights, model.biases):
        lines.append("w," + ",".join(repr(float(v)) for v in w.ravel()))
        lines.append("b," + ",".join(repr(float(v)) for v in b))
    path.write_text("\n".join(lines) + "\n")
    return path


def load_mlp(path: str | Path) -> MlpModel:
    lines = Path(path).read_text().splitlines()
    magic, version = lines[0].split(",")
    if magic != _MLP_MAGIC or int(version) != _MLP_VERSION:
        raise ValueError(f"{path} is not a supported mlp model file")
    dims = [int(v) for v in lines[1].split(",")[1:]]
    lr_s, epochs_s, batch_s, seed_s = lines[2].split(",")[1:]
    final_loss = float(lines[3].split(",")[1])
    cfg = MlpConfig(
        window=dims[0],
        hidden=tuple(dims[1:-1]),
        learning_rate=float(lr_s),
        epochs=int(epochs_s),
        batch_size=int(batch_s),
        rng_seed=int(seed_s),
    )
    weights = []
    biases = []
    row = 4
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w_vals = [float(v) for v in lines[row].split(",")[1:]]
        b_vals = [float(v) for v in lines[row + 1].split(",")[1:]]
        weights.append(np.array(w_vals).reshape(fan_out, fan_in))
        biases.append(np.array(b_vals))
        row += 2
    return MlpModel(
        config=cfg, weights=tuple(weights), biases=tuple(biases), final_loss=final_loss
    )
