"""Epoch loop with validation-driven learning-rate halving.

After every epoch the validation accuracy is compared with the best accuracy
seen so far. If the relative improvement falls below ``halving_threshold``
the learning rate is halved; training stops once the rate drops under
``stop_ratio * initial_lr``. The model returned is the best-validation
snapshot, not the last one.
"""
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteLoss
from .losses import combined_loss, hard_loss, soft_cross_entropy
from .mathcore import SeededRng
from .network import RmspropState, backward, forward, rmsprop_step

IMPROVEMENT_BASIS = "best-so-far"


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 0.004
    halving_threshold: float = 0.001
    stop_ratio: float = 0.1
    batch_size: int = 64
    max_epochs: int = 200
    seed: int = 0
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-8

    def __post_init__(self):
        if not self.initial_lr > 0:
            raise ValueError("initial_lr must be positive")
        if not 0.0 < self.stop_ratio < 1.0:
            raise ValueError("stop_ratio must lie in (0, 1)")
        if self.halving_threshold < 0:
            raise ValueError("halving_threshold must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")


@dataclass
class RunResult:
    val_acc: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    halvings: list = field(default_factory=list)   # epochs (0-based) after which LR was halved
    best_epoch: int = -1
    test_acc: float = math.nan
    wall_clock: float = field(default=0.0, compare=False)

    @property
    def epochs(self):
        return len(self.val_acc)

    @property
    def best_val_acc(self):
        return max(self.val_acc) if self.val_acc else math.nan

    def to_log(self):
        lines = [f"# relative improvement measured against {IMPROVEMENT_BASIS} validation accuracy",
                 "epoch\tlr\tval_acc"]
        for e, (lr, acc) in enumerate(zip(self.lr, self.val_acc)):
            lines.append(f"{e}\t{lr!r}\t{acc!r}")
        lines.append(f"best_epoch\t{self.best_epoch}")
        lines.append(f"test_acc\t{self.test_acc!r}")
        return "\n".join(lines) + "\n"


def evaluate(model, data):
    """Fraction of samples whose arg-max logit equals the label."""
    if len(data) == 0:
        return math.nan
    logits, _ = forward(model, data.features)
    return float(np.mean(np.argmax(logits, axis=1) == data.labels))


def hard_objective(labels):
    return lambda logits, idx: hard_loss(logits, labels[idx])


def combined_objective(labels, targets, weights):
    """``targets`` is a SoftTargetBatch aligned row-for-row with the training set."""
    return lambda logits, idx: combined_loss(logits, labels[idx], targets.take(idx), weights)


def soft_objective(targets, T=1.0):
    return lambda logits, idx: soft_cross_entropy(logits, targets.take(idx), T)


def train(model, train_data, val_data, loss_fn, cfg, features=None, rng=None):
    """Train a private copy of ``model``; return ``(best_model, RunResult)``.

    ``loss_fn(logits, idx)`` receives the minibatch logits and the indices of
    its rows in ``train_data`` and returns ``(value, dlogits)``. ``features``
    overrides the network inputs (teacher/student trains on one view of a
    parallel corpus while labels come from another). Minibatch order is drawn
    from ``rng``, by default a stream derived from ``cfg.seed``.
    """
    started = time.perf_counter()
    X = train_data.features if features is None else np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    params = model.copy()
    best = model.copy()
    result = RunResult()
    state = RmspropState.for_params(params, cfg.initial_lr, cfg.rms_decay, cfg.rms_epsilon)
    shuffle = rng if rng is not None else SeededRng(cfg.seed).child("shuffle")
    lr = cfg.initial_lr
    floor = cfg.stop_ratio * cfg.initial_lr
    best_acc = None
    for epoch in range(cfg.max_epochs):
        if lr < floor:
            break
        state.learning_rate = lr
        order = shuffle.permutation(n)
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            logits, cache = forward(params, X[idx])
            value, dlogits = loss_fn(logits, idx)
            if not math.isfinite(value) or not np.all(np.isfinite(dlogits)):
                raise NonFiniteLoss(epoch, b, value)
            rmsprop_step(params, backward(params, cache, dlogits), state)
        acc = evaluate(params, val_data)
        result.lr.append(lr)
        result.val_acc.append(acc)
        if best_acc is None:
            best_acc, best, result.best_epoch = acc, params.copy(), epoch
            continue
        improved = best_acc == 0 or (acc - best_acc) / best_acc >= cfg.halving_threshold
        if not improved:
            lr *= 0.5
            result.halvings.append(epoch)
        if acc > best_acc:
            best_acc, best, result.best_epoch = acc, params.copy(), epoch
    result.wall_clock = time.perf_counter() - started
    return best, result
