"""Small MLP with hand-coded backprop, SGD-with-momentum training, and the
defense-specific training variants (gradient sign-flip below a loss threshold,
dropout on the last hidden layer, checkpointing for early stopping)."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .losses import Objective, objective_batch
from .numerics import clamp_probs, dist_stats, softmax

CHECKPOINT_VERSION = 1


@dataclass
class Network:
    """Fully connected net; weights[i] maps layer i activations to layer i+1."""

    sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    dropout: float = 0.0

    def __post_init__(self):
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation: {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise ValueError("parameter shapes do not chain")

    def clone(self) -> "Network":
        return Network(
            sizes=list(self.sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
            dropout=self.dropout,
        )


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer, schedule, and defense recipe."""

    objective: Objective
    epochs: int = 100
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    milestones: tuple[int, ...] = ()
    lr_drop_factor: float = 10.0
    defense: str = "none"  # "none" | "relaxloss" | "early_stop"
    relax_threshold: float = 0.0
    checkpoint_epochs: tuple[int, ...] = ()

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if list(self.milestones) != sorted(set(self.milestones)) or any(
            m >= self.epochs for m in self.milestones
        ):
            raise ValueError("milestones must be strictly increasing and < epochs")
        if self.defense not in ("none", "relaxloss", "early_stop"):
            raise ValueError(f"unknown defense: {self.defense!r}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    lr: float
    train_loss_mean: float  # per-sample cross-entropy on the train set
    train_loss_var: float
    objective_mean: float  # the actual training objective
    train_acc: float
    test_acc: float
    conf_mean: float  # true-class confidence on the train set
    conf_var: float


def init_network(
    sizes: list[int],
    rng: np.random.Generator,
    activation: str = "relu",
    dropout: float = 0.0,
) -> Network:
    """Fan-in-scaled uniform init, bound sqrt(6 / fan_in)."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(list(sizes), weights, biases, activation=activation, dropout=dropout)


def _act(net: Network, v: np.ndarray) -> np.ndarray:
    return np.maximum(v, 0.0) if net.activation == "relu" else np.tanh(v)


def _act_grad(net: Network, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    return (pre > 0).astype(np.float64) if net.activation == "relu" else 1.0 - post**2


def forward(
    net: Network,
    x: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    """Batched forward pass; returns logits (n, K) and a cache for backward.

    Dropout (inverted scaling) is applied only in train mode, only to the input
    of the last fully connected layer.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != net.sizes[0]:
        raise ValueError(f"input dim {x.shape[1]} != network input {net.sizes[0]}")
    acts = [x]
    pres = []
    mask = None
    n_layers = len(net.weights)
    h = x
    for i in range(n_layers):
        if i == n_layers - 1 and train_mode and net.dropout > 0.0:
            if rng is None:
                raise ValueError("train-mode dropout needs an RNG")
            keep = 1.0 - net.dropout
            mask = (rng.random(h.shape) < keep).astype(np.float64) / keep
            h = h * mask
            acts[-1] = h
        z = h @ net.weights[i] + net.biases[i]
        pres.append(z)
        if i < n_layers - 1:
            h = _act(net, z)
            acts.append(h)
    cache = {"acts": acts, "pres": pres, "mask": mask, "n": x.shape[0]}
    return pres[-1], cache


def backward(net: Network, cache: dict, grad_logits: np.ndarray):
    """Gradients of the mean per-sample loss; grad_logits holds per-sample
    d loss_i / d z rows from the matching forward."""
    grad_logits = np.atleast_2d(np.asarray(grad_logits, dtype=np.float64))
    if grad_logits.shape[0] != cache["n"]:
        raise ValueError("grad_logits rows do not match the cached batch")
    n_layers = len(net.weights)
    d = grad_logits / cache["n"]
    dW = [None] * n_layers
    db = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        dW[i] = cache["acts"][i].T @ d
        db[i] = d.sum(axis=0)
        if i > 0:
            d = d @ net.weights[i].T
            if i == n_layers - 1 and cache["mask"] is not None:
                d = d * cache["mask"]
            d = d * _act_grad(net, cache["pres"][i - 1], cache["acts"][i])
    return dW, db


def predict_probs(net: Network, xs: np.ndarray) -> np.ndarray:
    logits, _ = forward(net, xs, train_mode=False)
    return softmax(logits, axis=1)


def accuracy(net: Network, xs: np.ndarray, ys: np.ndarray) -> float:
    probs = predict_probs(net, xs)
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(ys)))


def _lr_at(cfg: TrainConfig, epoch: int) -> float:
    drops = sum(1 for m in cfg.milestones if m <= epoch)
    return cfg.lr / (cfg.lr_drop_factor**drops)


def train(
    net: Network,
    train_set: tuple[np.ndarray, np.ndarray],
    test_set: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[Network, list[EpochStats], dict[int, Network]]:
    """SGD with momentum; the RNG fully determines shuffling and dropout.

    Returns the trained network, per-epoch stats, and (for the early-stop
    defense) checkpoints keyed by 1-based epoch number.
    """
    x_tr, y_tr = train_set
    x_te, y_te = test_set
    x_tr = np.asarray(x_tr, dtype=np.float64)
    y_tr = np.asarray(y_tr, dtype=np.int64)
    n = x_tr.shape[0]
    velocity_w = [np.zeros_like(w) for w in net.weights]
    velocity_b = [np.zeros_like(b) for b in net.biases]
    stats: list[EpochStats] = []
    checkpoints: dict[int, Network] = {}

    for epoch in range(cfg.epochs):
        lr = _lr_at(cfg, epoch)
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb, yb = x_tr[idx], y_tr[idx]
            logits, cache = forward(net, xb, train_mode=True, rng=rng)
            if not np.all(np.isfinite(logits)):
                raise RuntimeError(f"training diverged at epoch {epoch}: non-finite logits")
            probs = softmax(logits, axis=1)
            values, grad_logits = objective_batch(cfg.objective, probs, yb)
            if not np.all(np.isfinite(values)):
                raise RuntimeError(f"training diverged at epoch {epoch}: non-finite loss")
            sign = 1.0
            if cfg.defense == "relaxloss":
                batch_ce = float(
                    np.mean(-np.log(clamp_probs(probs[np.arange(len(yb)), yb])))
                )
                if batch_ce < cfg.relax_threshold:
                    sign = -1.0
            dW, db = backward(net, cache, grad_logits)
            for i in range(len(net.weights)):
                g_w = sign * dW[i] + cfg.weight_decay * net.weights[i]
                g_b = sign * db[i]
                velocity_w[i] = cfg.momentum * velocity_w[i] - lr * g_w
                velocity_b[i] = cfg.momentum * velocity_b[i] - lr * g_b
                net.weights[i] += velocity_w[i]
                net.biases[i] += velocity_b[i]
                if not np.all(np.isfinite(net.weights[i])):
                    raise RuntimeError(f"training diverged at epoch {epoch}: non-finite weights")

        stats.append(_epoch_stats(net, cfg, epoch, lr, x_tr, y_tr, x_te, y_te))
        if cfg.defense == "early_stop" and (epoch + 1) in cfg.checkpoint_epochs:
            checkpoints[epoch + 1] = net.clone()

    return net, stats, checkpoints


def _epoch_stats(net, cfg, epoch, lr, x_tr, y_tr, x_te, y_te) -> EpochStats:
    probs = predict_probs(net, x_tr)
    rows = np.arange(len(y_tr))
    conf = probs[rows, y_tr]
    ce = -np.log(clamp_probs(conf))
    obj_values, _ = objective_batch(cfg.objective, probs, y_tr)
    ce_stats = dist_stats(ce)
    conf_stats = dist_stats(conf)
    return EpochStats(
        epoch=epoch,
        lr=lr,
        train_loss_mean=ce_stats.mean,
        train_loss_var=ce_stats.var,
        objective_mean=float(np.mean(obj_values)),
        train_acc=float(np.mean(np.argmax(probs, axis=1) == y_tr)),
        test_acc=accuracy(net, x_te, y_te),
        conf_mean=conf_stats.mean,
        conf_var=conf_stats.var,
    )


def save_checkpoint(net: Network, path: str, config_snapshot: dict | None = None) -> None:
    """Versioned JSON checkpoint; format documented in docs/formats.md."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "sizes": list(net.sizes),
        "activation": net.activation,
        "dropout": net.dropout,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "config": config_snapshot or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_checkpoint(path: str) -> tuple[Network, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {payload.get('version')}")
    net = Network(
        sizes=[int(s) for s in payload["sizes"]],
        weights=[np.asarray(w, dtype=np.float64) for w in payload["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in payload["biases"]],
        activation=payload["activation"],
        dropout=float(payload["dropout"]),
    )
    return net, payload.get("config", {})
