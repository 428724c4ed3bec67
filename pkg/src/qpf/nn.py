"""Two-layer fully connected classifier trained with mini-batch Adam.

flatten -> FC1 (hidden) -> activation -> FC2 (classes) -> softmax
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

ACTIVATIONS = ("identity", "relu")


@dataclass
class ModelParams:
    W1: np.ndarray  # (hidden, inputs)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (classes, hidden)
    b2: np.ndarray  # (classes,)
    activation: str = "identity"

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        hidden, _ = self.W1.shape
        if self.b1.shape != (hidden,) or self.W2.shape[1] != hidden or self.b2.shape != (self.W2.shape[0],):
            raise ValueError(
                f"inconsistent shapes W1{self.W1.shape} b1{self.b1.shape} W2{self.W2.shape} b2{self.b2.shape}"
            )

    @property
    def arrays(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2]

    @property
    def n_inputs(self) -> int:
        return self.W1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.W2.shape[0]

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays)

    def like(self, arrays) -> "ModelParams":
        return ModelParams(*arrays, activation=self.activation)

    def copy(self) -> "ModelParams":
        return self.like([a.copy() for a in self.arrays])


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 100
    batch_size: int = 128
    epochs: int = 10
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    activation: str = "identity"
    eval_every: int = 50

    def __post_init__(self) -> None:
        for name in ("hidden", "batch_size", "epochs", "eval_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        return cls([np.zeros_like(a) for a in params.arrays], [np.zeros_like(a) for a in params.arrays])


def init_params(n_inputs: int, n_classes: int, config: TrainConfig, rng=None) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    h = config.hidden
    a1 = math.sqrt(6.0 / (n_inputs + h))
    a2 = math.sqrt(6.0 / (h + n_classes))
    return ModelParams(
        rng.uniform(-a1, a1, size=(h, n_inputs)),
        np.zeros(h),
        rng.uniform(-a2, a2, size=(n_classes, h)),
        np.zeros(n_classes),
        activation=config.activation,
    )


def _flatten(params: ModelParams, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    x = x.reshape(1, -1) if x.ndim == 1 else x.reshape(x.shape[0], -1)
    if x.shape[1] != params.n_inputs:
        raise ValueError(f"expected {params.n_inputs} input features, got {x.shape[1]}")
    return x


def _hidden(params: ModelParams, x: np.ndarray):
    pre = x @ params.W1.T + params.b1
    act = np.maximum(pre, 0.0) if params.activation == "relu" else pre
    return pre, act


def logits(params: ModelParams, features: np.ndarray) -> np.ndarray:
    x = _flatten(params, features)
    _, act = _hidden(params, x)
    return act @ params.W2.T + params.b2


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def forward(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Class probabilities; a single sample gives a 1-D result."""
    single = np.ndim(features) == 1
    probs = np.exp(_log_softmax(logits(params, features)))
    probs /= probs.sum(axis=1, keepdims=True)
    return probs[0] if single else probs


def loss_and_grad(params: ModelParams, features: np.ndarray, labels: np.ndarray) -> tuple[float, ModelParams]:
    """Mean cross-entropy over the batch and its gradient w.r.t. every parameter."""
    x = _flatten(params, features)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if y.shape[0] != n:
        raise ValueError(f"{n} samples but {y.shape[0]} labels")
    if y.min() < 0 or y.max() >= params.n_classes:
        raise ValueError(f"labels must lie in 0..{params.n_classes - 1}")

    pre, act = _hidden(params, x)
    logp = _log_softmax(act @ params.W2.T + params.b2)
    rows = np.arange(n)
    loss = -logp[rows, y].mean()

    dz = np.exp(logp)
    dz[rows, y] -= 1.0
    dz /= n
    gW2 = dz.T @ act
    gb2 = dz.sum(axis=0)
    dh = dz @ params.W2
    if params.activation == "relu":
        dh = dh * (pre > 0)
    gW1 = dh.T @ x
    gb1 = dh.sum(axis=0)
    return float(loss), params.like([gW1, gb1, gW2, gb2])


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    for g in grads.arrays:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient passed to adam_step")
    t = state.t + 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays, grads.arrays, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        p = p - config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)
        new_p.append(p)
        new_m.append(m)
        new_v.append(v)
    return params.like(new_p), AdamState(new_m, new_v, t)


def predict(params: ModelParams, features: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(logits(params, features), axis=1)


def evaluate(params: ModelParams, features: np.ndarray, labels: np.ndarray, batch: int = 4096) -> float:
    labels = np.asarray(labels).reshape(-1)
    if labels.size == 0:
        return float("nan")
    correct = 0
    for start in range(0, labels.size, batch):
        pred = predict(params, features[start : start + batch])
        correct += int((pred == labels[start : start + batch]).sum())
    return correct / labels.size


@dataclass
class MetricRow:
    iteration: int
    epoch: int
    train_loss: float
    test_accuracy: float


@dataclass
class TrainResult:
    params: ModelParams
    metrics: list[MetricRow]
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        return self.metrics[-1].test_accuracy if self.metrics else float("nan")


def train(
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    config: TrainConfig = TrainConfig(),
    test_features: np.ndarray | None = None,
    test_labels: np.ndarray | None = None,
) -> TrainResult:
    """Seeded mini-batch Adam training.

    Samples are reshuffled each epoch and the trailing partial batch is kept.
    A metric row (mean training loss since the previous row, test accuracy)
    is recorded every ``config.eval_every`` iterations and after the last one.
    """
    x = np.asarray(features, dtype=np.float64)
    x = x.reshape(x.shape[0], -1)
    y = np.asarray(labels, dtype=np.int64)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if test_features is not None:
        test_x = np.asarray(test_features, dtype=np.float64)
        test_x = test_x.reshape(test_x.shape[0], -1)
    rng = np.random.default_rng(config.seed)
    params = init_params(x.shape[1], n_classes, config, rng)
    state = AdamState.zeros_like(params)

    def test_acc() -> float:
        if test_features is None:
            return float("nan")
        return evaluate(params, test_x, test_labels)

    metrics: list[MetricRow] = []
    epoch_losses: list[float] = []
    window: list[float] = []
    it = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_and_grad(params, x[idx], y[idx])
            params, state = adam_step(params, grads, state, config)
            it += 1
            total += loss * len(idx)
            window.append(loss)
            if it % config.eval_every == 0:
                metrics.append(MetricRow(it, epoch, float(np.mean(window)), test_acc()))
                window = []
        epoch_losses.append(total / n)
    if not metrics or metrics[-1].iteration != it:
        metrics.append(MetricRow(it, config.epochs, float(np.mean(window)) if window else float("nan"), test_acc()))
    return TrainResult(params, metrics, epoch_losses)


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)
