"""Mini-batch training with Adam, inverse-frequency class weights and early
stopping on validation normalized accuracy."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..data_model import CORRECT, ERROR, EpochSet
from ..evalharness.metrics import normalized_accuracy
from . import autograd as ag
from .model import ConvNetModel, build_graph, convnet_predict

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    patience: int = 10
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for name in ("max_epochs", "batch_size", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            params[k] -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)


def class_weights(labels: np.ndarray) -> np.ndarray:
    """Weights inverse to class frequency, normalized to mean 1 over trials."""
    labels = np.asarray(labels)
    n = labels.size
    counts = np.array([(labels == CORRECT).sum(), (labels == ERROR).sum()], dtype=np.float64)
    if (counts == 0).any():
        raise ValueError("training data must contain both classes")
    return n / (2.0 * counts)


def loss_and_grads(model: ConvNetModel, x: np.ndarray, y: np.ndarray,
                   weights: np.ndarray | None = None, training: bool = True,
                   rng: np.random.Generator | None = None, stats: dict | None = None,
                   trace: list | None = None):
    params, scores = build_graph(model, x, training, rng, stats, trace)
    loss = ag.cross_entropy(scores, y, weights)
    loss.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data))
             for k, t in params.items()}
    return float(loss.data), grads


def _validation_score(model: ConvNetModel, es: EpochSet) -> float:
    pred, _ = convnet_predict(model, es)
    if len(np.unique(es.labels)) < 2:
        return float((pred == es.labels).mean())
    return normalized_accuracy(es.labels, pred)


def train(model: ConvNetModel, data: EpochSet, cfg: TrainConfig = TrainConfig()):
    """Train a copy of ``model``; returns (best model, history).

    The chronological tail (``validation_fraction``) of ``data`` is held out
    for early stopping; the returned parameters are those of the epoch with
    the best validation normalized accuracy.
    """
    labels = np.asarray(data.labels)
    if len(np.unique(labels)) < 2:
        raise ValueError("training data must contain both classes")
    n = data.n_trials
    n_val = int(round(n * cfg.validation_fraction))
    n_val = min(max(n_val, 1), n - 2)
    train_idx = np.arange(n - n_val)
    val = data.subset(np.arange(n - n_val, n))
    y_train = labels[train_idx]
    weights = class_weights(y_train)

    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, cfg.learning_rate)
    x_all = np.asarray(data.trials, dtype=model.dtype)

    history = []
    best_score = -np.inf
    best = model.copy()
    since_best = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(train_idx)
        losses, sizes = [], []
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if idx.size < 2:
                continue
            stats: dict = {}
            loss, grads = loss_and_grads(model, x_all[idx], labels[idx], weights,
                                         training=True, rng=rng, stats=stats)
            opt.step(model.params, grads)
            for key, (mean, var) in stats.items():
                model.buffers[f"{key}.mean"] = mean
                model.buffers[f"{key}.var"] = var
            losses.append(loss)
            sizes.append(idx.size)
        train_loss = float(np.average(losses, weights=sizes))
        score = _validation_score(model, val)
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_normalized_accuracy": score})
        log.debug("epoch %d loss %.4f val %.4f", epoch, train_loss, score)
        if score > best_score:
            best_score = score
            best = model.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    return best, history
