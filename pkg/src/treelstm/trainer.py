"""Loss, plain SGD training, evaluation and contiguous-fold cross-validation."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .complexity import MultCounter
from .data import MaskedSequence

log = logging.getLogger(__name__)

EPOCH_COLUMNS = ("epoch", "train_mse", "test_mse", "wall_ms", "mult_count")


class NumericError(RuntimeError):
    """Raised when a loss or gradient stops being finite."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 10
    seed: int = 0
    q_grid: list = field(default_factory=lambda: [3, 10])
    lr_grid: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4, 1e-5])
    folds: int = 5
    bptt_horizon: int = 64
    # prediction steps per SGD update; None = one update per pass
    update_every: int | None = None
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if self.update_every is not None and self.update_every < 1:
            raise ValueError(f"update_every must be >= 1, got {self.update_every}")


@dataclass
class EpochReport:
    epoch: int
    train_mse: float
    test_mse: float
    wall_ms: float | None
    mult_count: int


def step_loss(d: float, d_hat: float) -> float:
    return 0.5 * (d - d_hat) ** 2


def sequence_mse(predictions, targets, mask=None) -> float:
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    mask = np.ones(predictions.shape, dtype=bool) if mask is None else np.asarray(mask, bool)
    if not mask.any():
        raise ValueError("sequence_mse: no defined targets")
    e = predictions[mask] - targets[mask]
    return float(np.mean(e ** 2))


def loss_grad(cache) -> np.ndarray:
    """d(sum of 0.5 e^2)/d d_hat, zero at steps without a target."""
    return np.where(cache.has_target, cache.d_hat - cache.targets, 0.0)


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def apply_update(model, grads: dict, lr: float):
    params = model.parameters()
    for k, g in grads.items():
        params[k] -= lr * g


def _as_list(seqs) -> list:
    return [seqs] if isinstance(seqs, MaskedSequence) else list(seqs)


def sgd_epoch(model, train, config: TrainConfig, counter: MultCounter | None = None):
    """One pass of SGD over ``train`` (a sequence or a list of sequences).

    The main state is carried across update chunks; gradients do not flow
    back across a chunk boundary.  Returns ``(train_mse, n_clipped)`` where
    the MSE is accumulated from the predictions made during the pass.
    """
    sq_err = 0.0
    n_err = 0
    clipped = 0
    for seq in _as_list(train):
        steps = model.step_range(seq)
        if len(steps) == 0:
            continue
        chunk = config.update_every or len(steps)
        state = model.initial_state()
        for a in range(steps.start, steps.stop, chunk):
            b = min(a + chunk, steps.stop)
            cache = model.forward(seq, a, b, state, counter)
            e = loss_grad(cache)
            # overflow is reported below as a NumericError, not as a warning
            with np.errstate(over="ignore", invalid="ignore"):
                sq_err += float((e ** 2).sum())
                grads = model.backward(cache, e)
                norm = global_norm(grads)
            n_err += int(cache.has_target.sum())
            if not (np.isfinite(norm) and np.isfinite(sq_err)):
                raise NumericError(
                    f"non-finite loss or gradient (loss={sq_err}, grad norm={norm}) "
                    f"in steps [{a}, {b})"
                )
            if config.clip_norm is not None and norm > config.clip_norm:
                scale = config.clip_norm / norm
                grads = {k: g * scale for k, g in grads.items()}
                clipped += 1
            apply_update(model, grads, config.learning_rate)
            state = cache.final_state
    if clipped:
        log.info("gradient clipping active on %d update(s)", clipped)
    return (sq_err / n_err if n_err else float("nan")), clipped


def predict(model, seq: MaskedSequence, counter: MultCounter | None = None):
    """Forward over every prediction step of ``seq`` from a fresh state."""
    steps = model.step_range(seq)
    return model.forward(seq, steps.start, steps.stop, model.initial_state(), counter)


def evaluate(model, seq: MaskedSequence, counter: MultCounter | None = None) -> float:
    cache = predict(model, seq, counter)
    return sequence_mse(cache.d_hat, cache.targets, cache.has_target)


def train(model, train_seq, test_seq: MaskedSequence | None, config: TrainConfig,
          record_time: bool = False, on_epoch: Callable | None = None) -> list:
    """Train in place for ``config.epochs`` epochs; returns the epoch reports.

    ``mult_count`` is the cumulative cell multiplication tally of the
    training forward passes.
    """
    counter = MultCounter()
    reports = []
    for epoch in range(1, config.epochs + 1):
        t_start = time.perf_counter()
        train_mse, _ = sgd_epoch(model, train_seq, config, counter)
        wall = (time.perf_counter() - t_start) * 1e3 if record_time else None
        test_mse = evaluate(model, test_seq) if test_seq is not None else float("nan")
        rep = EpochReport(epoch, train_mse, test_mse, wall, counter.cells)
        reports.append(rep)
        if on_epoch is not None:
            on_epoch(rep)
    return reports


def write_epoch_csv(reports: Sequence[EpochReport], path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPOCH_COLUMNS)
        for r in reports:
            w.writerow([r.epoch, repr(float(r.train_mse)), repr(float(r.test_mse)),
                        "" if r.wall_ms is None else f"{r.wall_ms:.3f}", r.mult_count])


def contiguous_folds(seq: MaskedSequence, folds: int) -> list:
    """Split into ``folds`` contiguous blocks, the remainder spread over the
    first blocks."""
    n = len(seq)
    bounds = np.linspace(0, n, folds + 1).astype(int)
    return [seq.slice(bounds[k], bounds[k + 1]) for k in range(folds)]


@dataclass
class CVResult:
    best_q: int
    best_lr: float
    table: list  # rows: (q, lr, fold, val_mse)
    means: dict  # (q, lr) -> mean validation MSE
    ties: list


def cross_validate(dataset: MaskedSequence, family: Callable, q_grid, lr_grid,
                   folds: int = 5, seed: int = 0, min_fold: int = 3,
                   tie_rtol: float = 1e-12) -> CVResult:
    """Grid search over ``(q, lr)`` with contiguous validation blocks.

    ``family(q, lr, train_blocks, val_block, seed)`` trains a fresh model on
    the list of remaining blocks and returns its validation MSE.  The lowest
    mean wins; ties go to the smaller q, then the larger learning rate.
    """
    blocks = contiguous_folds(dataset, folds)
    short = [len(b) for b in blocks if len(b) < min_fold]
    if short:
        raise ValueError(f"fold of length {short[0]} shorter than the minimum {min_fold}")
    table = []
    means = {}
    for q in q_grid:
        for lr in lr_grid:
            scores = []
            for k in range(folds):
                rest = [b for j, b in enumerate(blocks) if j != k]
                s = float(family(q, lr, rest, blocks[k], seed))
                table.append((q, lr, k, s))
                scores.append(s)
            means[(q, lr)] = float(np.mean(scores))
    best = min(means.values())
    tied = [key for key, v in means.items()
            if v <= best + tie_rtol * max(abs(best), 1e-300)]
    tied.sort(key=lambda key: (key[0], -key[1]))
    if len(tied) > 1:
        log.info("cross-validation tie between %s; picked %s", tied, tied[0])
    q, lr = tied[0]
    return CVResult(q, lr, table, means, tied)
