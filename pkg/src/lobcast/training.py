"""Reverse-mode gradients, Adam, and the training loop with plateau callbacks."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Callable, Protocol

import numpy as np

from lobcast.errors import ConfigError, DivergenceError
from lobcast.tcn import kernels
from lobcast.tcn.model import (
    TcnConfig,
    TcnParams,
    as_tensor3,
    forward_with_cache,
    init_params,
    softmax_cross_entropy,
    tcn_forward,
)

logger = logging.getLogger(__name__)

EVAL_BATCH = 512


# -- gradients ---------------------------------------------------------------

def loss_and_grads(batch, targets, params: TcnParams, config: TcnConfig,
                   dropout_seed: int | None = None, train: bool = True):
    """(loss, grads, probs) for the mean cross entropy over the batch."""
    x = as_tensor3(batch, "batch")
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (x.shape[0],):
        raise ValueError(f"{x.shape[0]} windows but {targets.shape} targets")
    logits, cache = forward_with_cache(x, params, config, train, dropout_seed)
    loss, probs = softmax_cross_entropy(logits, targets)
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss}")

    B = x.shape[0]
    dlogits = probs.copy()
    dlogits[np.arange(B), targets] -= 1.0
    dlogits /= B
    head_w = cache.final.T @ dlogits
    head_b = dlogits.sum(axis=0)
    dh = np.zeros_like(cache.blocks[-1].pre2)
    dh[:, -1, :] = dlogits @ params.head_weights.T

    block_grads = []
    scale = cache.scale
    for bp, bc, d in reversed(list(zip(params.blocks, cache.blocks, config.dilations()))):
        dpre2 = kernels.relu_dropout_backward(dh, bc.pre2, bc.keep2, scale)
        dh1, dw2, db2 = kernels.causal_conv1d_backward(bc.h1, bp.conv2.weights, dpre2, d)
        dpre1 = kernels.relu_dropout_backward(dh1, bc.pre1, bc.keep1, scale)
        dx, dw1, db1 = kernels.causal_conv1d_backward(bc.x, bp.conv1.weights, dpre1, d)
        if bp.proj is not None:
            dxs, dwp, dbp = kernels.causal_conv1d_backward(bc.x, bp.proj.weights, dh, 1)
            dx += dxs
            block_grads.append([dw1, db1, dw2, db2, dwp, dbp])
        else:
            dx += dh
            block_grads.append([dw1, db1, dw2, db2])
        dh = dx
    arrays = [a for g in reversed(block_grads) for a in g] + [head_w, head_b]
    if not all(np.isfinite(a).all() for a in arrays):
        raise DivergenceError("non-finite gradient")
    return loss, TcnParams.from_arrays(arrays, like=params), probs


def backward(batch, targets, params: TcnParams, config: TcnConfig,
             dropout_seed: int | None = None, train: bool = True) -> tuple[float, TcnParams]:
    """Mean batch loss and its exact gradient for every parameter.

    With ``train=True`` and a nonzero dropout rate the masks are the ones
    ``tcn_forward(..., mode="train", seed=dropout_seed)`` would draw.
    """
    loss, grads, _ = loss_and_grads(batch, targets, params, config, dropout_seed, train)
    return loss, grads


# -- optimizer -----------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    step: int
    m: TcnParams
    v: TcnParams
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7

    @classmethod
    def initial(cls, params: TcnParams, lr: float = 0.01, beta1: float = 0.9,
                beta2: float = 0.999, epsilon: float = 1e-7) -> "AdamState":
        return cls(0, params.zeros_like(), params.zeros_like(), lr, beta1, beta2, epsilon)


def adam_step(params: TcnParams, grads: TcnParams, state: AdamState) -> tuple[TcnParams, AdamState]:
    """Bias-corrected Adam: p - lr * m_hat / (sqrt(v_hat) + eps)."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m2 = b1 * m + (1.0 - b1) * g
        v2 = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - state.lr * (m2 / c1) / (np.sqrt(v2 / c2) + state.epsilon))
        new_m.append(m2)
        new_v.append(v2)
    return (TcnParams.from_arrays(new_p, like=params),
            replace(state, step=t, m=TcnParams.from_arrays(new_m, like=params),
                    v=TcnParams.from_arrays(new_v, like=params)))


# -- training loop -----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    early_stop_patience: int = 4
    lr_plateau_patience: int = 2
    lr_plateau_factor: float = 0.5
    max_epochs: int = 100
    validation_fraction: float = 0.1
    learning_rate: float = 0.01
    epsilon: float = 1e-7
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be positive")
        if self.early_stop_patience < 1 or self.lr_plateau_patience < 1:
            raise ConfigError("patiences must be >= 1")
        if not 0 < self.validation_fraction < 0.5:
            raise ConfigError("validation_fraction must be in (0, 0.5)")
        if not 0 < self.lr_plateau_factor < 1:
            raise ConfigError("lr_plateau_factor must be in (0, 1)")
        if not (self.learning_rate > 0 and self.epsilon > 0):
            raise ConfigError("learning_rate and epsilon must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        bad = set(d) - known
        if bad:
            raise ConfigError(f"unknown training config keys: {sorted(bad)}")
        return cls(**d)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    train_accuracy: float
    val_accuracy: float
    lr_in_effect: float

    def to_dict(self) -> dict:
        return asdict(self)


class Dataset(Protocol):
    labels: np.ndarray

    def __len__(self) -> int: ...

    def gather(self, idx) -> np.ndarray: ...


@dataclass
class FitResult:
    params: TcnParams
    history: list[EpochStats]
    stop_reason: str
    best_epoch: int
    plateau_events: int


Evaluator = Callable[[TcnParams, Dataset], tuple[float, float]]


def evaluate(params: TcnParams, data: Dataset, config: TcnConfig,
             batch_size: int = EVAL_BATCH) -> tuple[float, float]:
    """Eval-mode (mean loss, accuracy) over a dataset."""
    n = len(data)
    total_loss = 0.0
    correct = 0
    for s in range(0, n, batch_size):
        idx = np.arange(s, min(s + batch_size, n))
        logits = tcn_forward(data.gather(idx), params, config, "eval")
        y = data.labels[idx]
        loss, probs = softmax_cross_entropy(logits, y)
        total_loss += loss * idx.size
        correct += int((probs.argmax(axis=1) == y).sum())
    return total_loss / n, correct / n


class PlateauTracker:
    """Early stopping plus learning-rate reduction on a validation-loss plateau.

    Improvement means a strict decrease of the best loss seen so far.
    """

    def __init__(self, lr: float, lr_patience: int, lr_factor: float, stop_patience: int):
        self.lr = lr
        self.lr_patience = lr_patience
        self.lr_factor = lr_factor
        self.stop_patience = stop_patience
        self.best = math.inf
        self.lr_wait = 0
        self.stop_wait = 0
        self.plateau_events = 0

    def update(self, val_loss: float) -> tuple[bool, bool]:
        """Record one epoch; returns (improved, should_stop). May lower ``lr``."""
        if val_loss < self.best:
            self.best = val_loss
            self.lr_wait = self.stop_wait = 0
            return True, False
        self.lr_wait += 1
        self.stop_wait += 1
        if self.lr_wait >= self.lr_patience:
            self.lr *= self.lr_factor
            self.lr_wait = 0
            self.plateau_events += 1
            logger.info("validation loss plateau: learning rate -> %g", self.lr)
        return False, self.stop_wait >= self.stop_patience


def fit(train_set: Dataset, val_set: Dataset, config: TrainConfig, tcn_config: TcnConfig,
        evaluator: Evaluator | None = None,
        on_epoch: Callable[[EpochStats], None] | None = None) -> FitResult:
    """Train from a fresh seeded initialization and return the best-validation parameters.

    ``evaluator`` replaces the validation pass (used to script loss curves in
    tests); it receives the current parameters and the validation set.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must be non-empty")
    init_seed, loop_seed = np.random.SeedSequence(config.seed).generate_state(2)
    params = init_params(tcn_config, int(init_seed))
    rng = np.random.default_rng(int(loop_seed))
    state = AdamState.initial(params, config.learning_rate, config.beta1, config.beta2,
                              config.epsilon)
    tracker = PlateauTracker(config.learning_rate, config.lr_plateau_patience,
                             config.lr_plateau_factor, config.early_stop_patience)
    if evaluator is None:
        evaluator = lambda p, d: evaluate(p, d, tcn_config)  # noqa: E731

    history: list[EpochStats] = []
    best_params, best_epoch = params, 0
    stop_reason = "max_epochs"
    n = len(train_set)
    for epoch in range(1, config.max_epochs + 1):
        lr = tracker.lr
        state = replace(state, lr=lr)
        perm = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for b, s in enumerate(range(0, n, config.batch_size)):
            idx = np.sort(perm[s:s + config.batch_size])
            x = train_set.gather(idx)
            y = train_set.labels[idx]
            dropout_seed = int(rng.integers(0, 2 ** 63 - 1))
            try:
                loss, grads, probs = loss_and_grads(x, y, params, tcn_config, dropout_seed)
            except DivergenceError as exc:
                raise DivergenceError(str(exc), epoch=epoch, batch=b) from None
            params, state = adam_step(params, grads, state)
            loss_sum += loss * idx.size
            correct += int((probs.argmax(axis=1) == y).sum())
        val_loss, val_acc = evaluator(params, val_set)
        if not math.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss {val_loss}", epoch=epoch)
        stats = EpochStats(epoch, loss_sum / n, float(val_loss), correct / n, float(val_acc), lr)
        history.append(stats)
        logger.info("epoch %d train_loss %.4f val_loss %.4f val_acc %.4f lr %g", epoch,
                    stats.train_loss, stats.val_loss, stats.val_accuracy, lr)
        if on_epoch is not None:
            on_epoch(stats)
        improved, stop = tracker.update(val_loss)
        if improved:
            best_params, best_epoch = params, epoch
        if stop:
            stop_reason = "early_stopping"
            break
    return FitResult(best_params, history, stop_reason, best_epoch, tracker.plateau_events)
