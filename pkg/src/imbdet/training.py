"""Momentum-SGD training of a small softmax proposal classifier.

The model is a linear map or a one-hidden-layer tanh MLP over proposal
features, trained with the configured loss on hard-negative-mined batches.
Everything runs in double precision and is bit-reproducible per
(config, data).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import fileio
from .classes import ClassTable
from .data import ProposalBatch
from .errors import (
    DivergenceError,
    EmptyForegroundError,
    InvalidConfigError,
    InvalidInputError,
)
from .losses import LossConfig, _losses_and_dlogits, softmax
from .mining import MiningConfig, mine_batch

ARCHITECTURES = ("linear", "mlp")


@dataclass
class ClassifierModel:
    classes: ClassTable
    feature_dim: int
    architecture: str
    params: dict[str, np.ndarray]
    hidden_dim: int | None = None

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise InvalidConfigError(f"unknown architecture {self.architecture!r}")
        if self.architecture == "mlp" and not self.hidden_dim:
            raise InvalidConfigError("mlp architecture requires hidden_dim")
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in self.params.items()}
        for name, p in self.params.items():
            if not np.all(np.isfinite(p)):
                raise InvalidInputError(f"parameter {name!r} contains non-finite values")

    @property
    def num_outputs(self) -> int:
        return self.classes.size

    def copy(self) -> "ClassifierModel":
        return ClassifierModel(
            classes=self.classes,
            feature_dim=self.feature_dim,
            architecture=self.architecture,
            params={k: v.copy() for k, v in self.params.items()},
            hidden_dim=self.hidden_dim,
        )


def _glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_model(
    architecture: str,
    feature_dim: int,
    classes: ClassTable,
    seed: int,
    hidden_dim: int | None = None,
) -> ClassifierModel:
    """Seeded scaled-uniform weights, zero biases."""
    if feature_dim < 1:
        raise InvalidConfigError("feature_dim must be >= 1")
    rng = np.random.default_rng(seed)
    k = classes.size
    if architecture == "linear":
        params = {"W": _glorot_uniform(rng, feature_dim, k), "b": np.zeros(k)}
    elif architecture == "mlp":
        if not hidden_dim or hidden_dim < 1:
            raise InvalidConfigError("hidden_dim must be >= 1 for mlp")
        params = {
            "W1": _glorot_uniform(rng, feature_dim, hidden_dim),
            "b1": np.zeros(hidden_dim),
            "W2": _glorot_uniform(rng, hidden_dim, k),
            "b2": np.zeros(k),
        }
    else:
        raise InvalidConfigError(f"unknown architecture {architecture!r}")
    return ClassifierModel(
        classes=classes,
        feature_dim=feature_dim,
        architecture=architecture,
        params=params,
        hidden_dim=hidden_dim,
    )


def _forward(model: ClassifierModel, x: np.ndarray):
    if model.architecture == "linear":
        return x @ model.params["W"] + model.params["b"], None
    h = np.tanh(x @ model.params["W1"] + model.params["b1"])
    return h @ model.params["W2"] + model.params["b2"], h


def _backward(model: ClassifierModel, x: np.ndarray, hidden, g: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients given d(loss)/d(logits) rows ``g``."""
    if model.architecture == "linear":
        return {"W": x.T @ g, "b": g.sum(axis=0)}
    dh = g @ model.params["W2"].T
    dz1 = dh * (1.0 - hidden**2)
    return {
        "W2": hidden.T @ g,
        "b2": g.sum(axis=0),
        "W1": x.T @ dz1,
        "b1": dz1.sum(axis=0),
    }


def momentum_step(
    velocity: np.ndarray, gradient: np.ndarray, learning_rate: float, momentum: float
) -> np.ndarray:
    """Heavy-ball velocity update: v <- mu*v - lr*g."""
    return momentum * velocity - learning_rate * gradient


def predict(model: ClassifierModel, features) -> np.ndarray:
    """Per-proposal class probabilities (softmax over the forward pass)."""
    x = np.asarray(features, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.feature_dim:
        raise InvalidInputError(
            f"features have shape {x.shape}, expected (N, {model.feature_dim})"
        )
    logits, _ = _forward(model, x)
    probs = softmax(logits)
    return probs[0] if squeeze else probs


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    mining: MiningConfig = field(default_factory=MiningConfig)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise InvalidConfigError("learning_rate must be >= 0")
        if not (0 <= self.momentum < 1):
            raise InvalidConfigError("momentum must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidConfigError("batch_size and epochs must be >= 1")


@dataclass
class TrainLog:
    epoch_mean_losses: list[float] = field(default_factory=list)
    skipped_batches: int = 0
    steps: int = 0

    def as_dict(self) -> dict:
        return {
            "epoch_mean_losses": list(self.epoch_mean_losses),
            "skipped_batches": self.skipped_batches,
            "steps": self.steps,
        }


def make_minibatches(pool: ProposalBatch, batch_size: int) -> list[ProposalBatch]:
    """Consecutive fixed chunks of the pool, in pool order."""
    if batch_size < 1:
        raise InvalidConfigError("batch_size must be >= 1")
    return [pool.subset(range(i, min(i + batch_size, len(pool)))) for i in range(0, len(pool), batch_size)]


def train(
    model: ClassifierModel,
    batches: Sequence[ProposalBatch] | ProposalBatch,
    cfg: TrainConfig,
) -> tuple[ClassifierModel, TrainLog]:
    """Run momentum SGD over mined batches; returns a new model plus the log.

    Each epoch visits the batches in a seeded shuffled order.  Per batch the
    configured loss is computed for every proposal, the mining step picks the
    training subset, and the velocity update v <- mu*v - lr*g, theta <- theta + v
    is applied with g the gradient of the mined batch's mean loss.  Batches
    without foreground proposals are skipped and counted.
    """
    if isinstance(batches, ProposalBatch):
        batches = make_minibatches(batches, cfg.batch_size)
    if not batches:
        raise InvalidInputError("at least one batch is required")
    for b in batches:
        if b.feature_dim != model.feature_dim:
            raise InvalidInputError(
                f"batch feature dim {b.feature_dim} does not match model {model.feature_dim}"
            )

    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    log = TrainLog()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(batches))
        epoch_losses = []
        for pos, batch_index in enumerate(order):
            batch = batches[batch_index]
            logits, hidden = _forward(model, batch.features)
            if not np.all(np.isfinite(logits)):
                raise DivergenceError(epoch=epoch, batch=int(batch_index))
            values, dlogits = _losses_and_dlogits(logits, batch.labels, cfg.loss)
            try:
                mined = mine_batch(batch, values, cfg.mining, rng=rng)
            except EmptyForegroundError:
                log.skipped_batches += 1
                continue
            batch_value = float(values[mined].mean())
            if not np.isfinite(batch_value):
                raise DivergenceError(epoch=epoch, batch=int(batch_index))
            g_logits = dlogits[mined] / mined.size
            grads = _backward(
                model,
                batch.features[mined],
                hidden[mined] if hidden is not None else None,
                g_logits,
            )
            for name, g in grads.items():
                velocity[name] = momentum_step(velocity[name], g, cfg.learning_rate, cfg.momentum)
                model.params[name] = model.params[name] + velocity[name]
            epoch_losses.append(batch_value)
            log.steps += 1
        log.epoch_mean_losses.append(float(np.mean(epoch_losses)) if epoch_losses else float("nan"))
    return model, log


def _loss_config_dict(cfg: LossConfig) -> dict:
    weights = cfg.static_weights
    if weights is not None:
        weights = np.asarray(getattr(weights, "values", weights), dtype=np.float64).tolist()
    return {
        "static_weights": weights,
        "focal_alpha": cfg.focal_alpha,
        "prob_floor": cfg.prob_floor,
    }


def train_config_dict(cfg: TrainConfig) -> dict:
    doc = dataclasses.asdict(cfg)
    doc["loss"] = _loss_config_dict(cfg.loss)
    doc["mining"] = dataclasses.asdict(cfg.mining)
    return doc


def save_model(
    model: ClassifierModel,
    path: str | Path,
    train_config: TrainConfig | None = None,
    log: TrainLog | None = None,
    run_metadata: Mapping | None = None,
) -> None:
    doc = {
        "format_version": fileio.FORMAT_VERSION,
        "kind": "classifier_model",
        "architecture": model.architecture,
        "feature_dim": model.feature_dim,
        "hidden_dim": model.hidden_dim,
        "classes": list(model.classes.names),
        "params": {k: v.tolist() for k, v in model.params.items()},
        "train_config": train_config_dict(train_config) if train_config else None,
        "log": log.as_dict() if log else None,
    }
    if run_metadata is not None:
        doc["run"] = dict(run_metadata)
    fileio.write_json_atomic(path, doc)


def load_model(path: str | Path) -> ClassifierModel:
    doc = fileio.read_json(path)
    if doc.get("kind") != "classifier_model":
        raise InvalidInputError(f"{path} is not a model file")
    return ClassifierModel(
        classes=ClassTable(tuple(doc["classes"])),
        feature_dim=int(doc["feature_dim"]),
        architecture=doc["architecture"],
        params={k: np.array(v, dtype=np.float64) for k, v in doc["params"].items()},
        hidden_dim=doc.get("hidden_dim"),
    )
