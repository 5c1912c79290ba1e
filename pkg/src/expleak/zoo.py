"""Target/shadow architectures and a deterministic SGD trainer.

Three desk-scale architectures stand in for the large image models the
attack literature uses: two ReLU MLPs and a tiny CNN.  The trainer is plain
SGD (no momentum) with optional cosine-annealed learning rate and L2 weight
decay, deterministic under the config seed; it can stop early once a target
test accuracy is reached, which drives the generalization-gap study.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import nn
from .data import Dataset
from .errors import TrainingDivergedError
from .seeding import derive_seed

Array = np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.1
    weight_decay: float = 1e-4
    schedule: str = "cosine_annealing"  # or "constant"
    batch_size: int = 32
    seed: int = 0
    target_test_accuracy: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be >= 0")
        if self.schedule not in ("constant", "cosine_annealing"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def mlp_a(input_shape: tuple[int, ...], num_classes: int) -> list[nn.LayerSpec]:
    (d,) = input_shape
    return [nn.dense(d, 64), nn.relu(), nn.dense(64, 32), nn.relu(), nn.dense(32, num_classes)]


def mlp_b(input_shape: tuple[int, ...], num_classes: int) -> list[nn.LayerSpec]:
    (d,) = input_shape
    return [nn.dense(d, 128), nn.relu(), nn.dense(128, num_classes)]


def tiny_cnn(input_shape: tuple[int, ...], num_classes: int) -> list[nn.LayerSpec]:
    c, h, w = input_shape
    conv_h, conv_w = h - 2, w - 2  # 3x3 valid conv
    flat = 8 * (conv_h // 2) * (conv_w // 2)
    return [
        nn.conv2d(c, 8, 3),
        nn.relu(),
        nn.avgpool2d(2),
        nn.flatten(),
        nn.dense(flat, num_classes),
    ]


ARCHITECTURES = {"mlp_a": mlp_a, "mlp_b": mlp_b, "tiny_cnn": tiny_cnn}


def build_architecture(name: str, input_shape: tuple[int, ...], num_classes: int) -> list[nn.LayerSpec]:
    if name not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {name!r}; have {sorted(ARCHITECTURES)}")
    return ARCHITECTURES[name](tuple(input_shape), num_classes)


def learning_rate_at(cfg: TrainConfig, epoch: int) -> float:
    if cfg.schedule == "constant":
        return cfg.learning_rate
    span = max(cfg.epochs - 1, 1)
    return 0.5 * cfg.learning_rate * (1.0 + math.cos(math.pi * epoch / span))


def predict(model: nn.Model, X: Array) -> Array:
    logits, _ = nn.forward_batch(model, X)
    return logits.argmax(axis=1)


def accuracy(model: nn.Model, dataset: Dataset) -> float:
    """Fraction of correct argmax predictions."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    return float((predict(model, dataset.X) == dataset.y).mean())


def train(
    arch: list[nn.LayerSpec],
    data: Dataset,
    test: Dataset,
    cfg: TrainConfig,
    arch_name: str = "custom",
) -> nn.Model:
    """Train with mini-batch SGD; deterministic under ``cfg.seed``.

    The returned model's ``meta`` records both accuracies, the config, and a
    per-epoch log (epoch, lr, loss, train/test accuracy).  Raises
    :class:`TrainingDivergedError` with the epoch index if the loss goes
    non-finite.  Stops early once ``cfg.target_test_accuracy`` is reached.
    """
    model = nn.init_model(arch, data.feature_shape, seed=cfg.seed)
    shuffle_rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
    n = len(data)
    log: list[dict] = []
    epochs_run = 0
    for epoch in range(cfg.epochs):
        lr = learning_rate_at(cfg, epoch)
        order = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            try:
                loss, grads = nn.loss_and_param_gradient(model, data.X[idx], data.y[idx])
            except FloatingPointError:
                raise TrainingDivergedError(epoch) from None
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            losses.append(loss)
            for p, g in zip(model.params, grads):
                for name in g:
                    p[name] -= lr * (g[name] + cfg.weight_decay * p[name])
        train_acc = accuracy(model, data)
        test_acc = accuracy(model, test)
        epochs_run = epoch + 1
        log.append(
            {
                "epoch": epoch,
                "lr": lr,
                "loss": float(np.mean(losses)),
                "train_accuracy": train_acc,
                "test_accuracy": test_acc,
            }
        )
        if cfg.target_test_accuracy is not None and test_acc >= cfg.target_test_accuracy:
            break
    model.meta = {
        "architecture": arch_name,
        "seed": cfg.seed,
        "epochs_run": epochs_run,
        "train_accuracy": log[-1]["train_accuracy"],
        "test_accuracy": log[-1]["test_accuracy"],
        "train_config": {
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "weight_decay": cfg.weight_decay,
            "schedule": cfg.schedule,
            "batch_size": cfg.batch_size,
            "seed": cfg.seed,
            "target_test_accuracy": cfg.target_test_accuracy,
        },
        "log": log,
    }
    return model


def train_named(
    name: str,
    data: Dataset,
    test: Dataset,
    cfg: TrainConfig,
) -> nn.Model:
    arch = build_architecture(name, data.feature_shape, data.num_classes)
    return train(arch, data, test, cfg, arch_name=name)


def save_training_log(model: nn.Model, path: str | Path) -> None:
    """Training-log CSV: epoch, lr, loss, train acc, test acc."""
    log = model.meta.get("log", [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "loss", "train_accuracy", "test_accuracy"])
        for row in log:
            writer.writerow(
                [
                    row["epoch"],
                    repr(row["lr"]),
                    repr(row["loss"]),
                    repr(row["train_accuracy"]),
                    repr(row["test_accuracy"]),
                ]
            )


def overfit_config(seed: int = 0, epochs: int = 300) -> TrainConfig:
    """Deliberate memorization: many epochs, no decay, constant small lr."""
    return TrainConfig(
        epochs=epochs,
        learning_rate=0.05,
        weight_decay=0.0,
        schedule="constant",
        batch_size=16,
        seed=seed,
    )


def replace_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed)
