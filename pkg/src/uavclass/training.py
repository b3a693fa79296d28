"""Hybrid-loss training: Adam, three-phase LR schedule, early stopping.

The objective is lambda_data * L_data + lambda_phys * L_phys. L_data is the
mean squared residual norm over shuffled timestep samples. L_phys penalizes
consecutive-timestep prediction differences, which needs temporal adjacency,
so it is evaluated on contiguous windows resampled from training trajectories
at every optimization step rather than on the shuffled batch.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import NormStats
from .errors import DivergedTrainingError
from .network import NetworkParams, backward, class_onehot, forward, init_params


@dataclass
class TrainConfig:
    lambda_data: float = 1.0
    lambda_phys: float = 0.2
    batch_train: int = 256
    batch_eval: int = 1000
    epochs: int = 100
    patience: int = 30
    early_stop_delta: float = 1e-5
    lr_phase1: float = 1e-3
    lr_phase2: float = 1e-4
    lr_phase3: float = 1e-5
    phase2_start: float = 0.5   # fraction of epochs where phase 2 begins
    phase3_start: float = 0.75
    phys_window: int = 32       # contiguous samples per physics window
    phys_windows: int = 8       # windows drawn per optimization step
    seed: int = 0

    def __post_init__(self):
        if self.lambda_data < 0.0 or self.lambda_phys < 0.0:
            raise ValueError("loss weights must be >= 0")
        if not self.lr_phase1 > self.lr_phase2 > self.lr_phase3 > 0.0:
            raise ValueError("learning rates must strictly decrease by phase")
        if not 0.0 < self.phase2_start < self.phase3_start <= 1.0:
            raise ValueError("phase boundaries must satisfy 0 < p2 < p3 <= 1")
        if min(self.batch_train, self.batch_eval, self.epochs,
               self.patience, self.phys_window, self.phys_windows) < 1:
            raise ValueError("counts must be >= 1")
        if self.phys_window < 2:
            raise ValueError("physics windows need at least 2 samples")


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def data_loss(yhat: np.ndarray, y: np.ndarray) -> float:
    """Mean over rows of the squared residual norm."""
    yhat, y = np.asarray(yhat, float), np.asarray(y, float)
    if yhat.shape != y.shape:
        raise ValueError(f"shape mismatch: {yhat.shape} vs {y.shape}")
    if yhat.ndim == 1:
        yhat, y = yhat[:, None], y[:, None]
    return float(np.mean(np.sum((yhat - y) ** 2, axis=-1)))


def physics_loss(yhat: np.ndarray) -> float:
    """Mean over consecutive pairs of the squared prediction-change norm.

    Rows must be time-ordered samples of a single trajectory; requires at
    least two rows.
    """
    yhat = np.asarray(yhat, float)
    if yhat.ndim == 1:
        yhat = yhat[:, None]
    if yhat.shape[0] < 2:
        raise ValueError("physics loss needs at least 2 time steps")
    diffs = yhat[1:] - yhat[:-1]
    return float(np.mean(np.sum(diffs ** 2, axis=-1)))


def hybrid_loss(yhat: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> float:
    """lambda_data * data_loss + lambda_phys * physics_loss (time-ordered rows)."""
    total = cfg.lambda_data * data_loss(yhat, y)
    if cfg.lambda_phys != 0.0:
        total += cfg.lambda_phys * physics_loss(yhat)
    return float(total)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Piecewise-constant schedule; phases 2 and 3 are each 10x smaller."""
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    p2 = int(np.floor(cfg.phase2_start * cfg.epochs))
    p3 = int(np.floor(cfg.phase3_start * cfg.epochs))
    if epoch < p2:
        return cfg.lr_phase1
    if epoch < p3:
        return cfg.lr_phase2
    return cfg.lr_phase3


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Adam with bias correction: p -= lr * mhat / (sqrt(vhat) + eps)."""

    def __init__(self, params: NetworkParams, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: NetworkParams, grads: NetworkParams, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for group, mg, vg, gg in (
            (params.weights, self.m.weights, self.v.weights, grads.weights),
            (params.biases, self.m.biases, self.v.biases, grads.biases),
        ):
            for p, m, v, g in zip(group, mg, vg, gg):
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g ** 2
                p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# Fit
# ---------------------------------------------------------------------------

@dataclass
class TrainLog:
    epoch: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def append(self, epoch, train_loss, val_loss, lr, seconds):
        self.epoch.append(int(epoch))
        self.train_loss.append(float(train_loss))
        self.val_loss.append(float(val_loss))
        self.lr.append(float(lr))
        self.seconds.append(float(seconds))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "lr", "seconds"])
            for row in zip(self.epoch, self.train_loss, self.val_loss,
                           self.lr, self.seconds):
                writer.writerow([row[0]] + [repr(v) for v in row[1:]])

    @classmethod
    def from_csv(cls, path) -> "TrainLog":
        log = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                log.append(int(row["epoch"]), float(row["train_loss"]),
                           float(row["val_loss"]), float(row["lr"]),
                           float(row["seconds"]))
        return log


@dataclass
class _Split:
    """Flattened, normalized (input, target) rows plus trajectory extents."""

    x: np.ndarray          # (N, 15) normalized state + one-hot class
    y: np.ndarray          # (N, 12) normalized derivative targets
    spans: list[tuple[int, int]]   # per-trajectory (start, length)


def _flatten(trajectories, stats: NormStats) -> _Split:
    xs, ys, spans, offset = [], [], [], 0
    for t in trajectories:
        rows = t.states.shape[0]
        onehot = np.broadcast_to(class_onehot(t.class_id), (rows, 3))
        xs.append(np.hstack([stats.normalize_states(t.states), onehot]))
        ys.append(stats.normalize_derivs(t.derivs))
        spans.append((offset, rows))
        offset += rows
    return _Split(np.vstack(xs), np.vstack(ys), spans)


def predict_rows(params: NetworkParams, x: np.ndarray, batch: int = 1000) -> np.ndarray:
    """Forward in evaluation batches; returns stacked outputs."""
    outs = []
    for i in range(0, x.shape[0], batch):
        out, _ = forward(params, x[i:i + batch])
        outs.append(out)
    return np.vstack(outs)


def _validation_loss(params: NetworkParams, split: _Split, cfg: TrainConfig) -> float:
    yhat = predict_rows(params, split.x, cfg.batch_eval)
    total = cfg.lambda_data * data_loss(yhat, split.y)
    if cfg.lambda_phys != 0.0:
        phys = [physics_loss(yhat[s:s + n]) for s, n in split.spans if n >= 2]
        if phys:
            total += cfg.lambda_phys * float(np.mean(phys))
    return float(total)


def _sample_windows(split: _Split, n_windows: int, window: int, rng):
    """Row indices of contiguous same-trajectory windows, shape (K, W)."""
    starts = []
    traj_ids = rng.integers(0, len(split.spans), n_windows)
    for ti in traj_ids:
        s, n = split.spans[ti]
        w = min(window, n)
        starts.append(s + rng.integers(0, n - w + 1))
    w = min(window, min(n for _, n in split.spans))
    return np.array(starts)[:, None] + np.arange(w)[None, :]


def fit(train_trajectories, val_trajectories, stats: NormStats,
        cfg: TrainConfig) -> tuple[NetworkParams, TrainLog]:
    """Train the network; returns the best-validation parameters and the log.

    Deterministic in cfg.seed: the seed drives initialization, shuffling, and
    physics-window sampling. Stops early when the validation loss has not
    improved by early_stop_delta for ``patience`` consecutive epochs. Raises
    DivergedTrainingError if a loss turns non-finite.
    """
    train = _flatten(list(train_trajectories), stats)
    val = _flatten(list(val_trajectories), stats)
    if train.x.shape[0] == 0 or val.x.shape[0] == 0:
        raise ValueError("train and validation splits must be non-empty")

    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg.seed)
    adam = Adam(params)
    log = TrainLog()

    n_rows = train.x.shape[0]
    use_phys = cfg.lambda_phys != 0.0 and any(n >= 2 for _, n in train.spans)

    best_val = np.inf
    best_params = params.copy()
    stall = 0

    for epoch in range(cfg.epochs):
        t_start = time.perf_counter()
        lr = lr_at(epoch, cfg)
        perm = rng.permutation(n_rows)
        epoch_losses = []

        for lo in range(0, n_rows, cfg.batch_train):
            idx = perm[lo:lo + cfg.batch_train]
            xb, yb = train.x[idx], train.y[idx]
            out, cache = forward(params, xb)
            resid = out - yb
            batch_loss = cfg.lambda_data * float(np.mean(np.sum(resid ** 2, axis=-1)))
            grads = backward(
                params, cache, (2.0 * cfg.lambda_data / xb.shape[0]) * resid
            )

            if use_phys:
                widx = _sample_windows(train, cfg.phys_windows, cfg.phys_window, rng)
                k, w = widx.shape
                wout, wcache = forward(params, train.x[widx.ravel()])
                wout = wout.reshape(k, w, -1)
                diffs = wout[:, 1:, :] - wout[:, :-1, :]
                batch_loss += cfg.lambda_phys * float(
                    np.mean(np.sum(diffs ** 2, axis=-1))
                )
                gwin = np.zeros_like(wout)
                scale = 2.0 * cfg.lambda_phys / (k * (w - 1))
                gwin[:, 1:, :] += scale * diffs
                gwin[:, :-1, :] -= scale * diffs
                pgrads = backward(params, wcache, gwin.reshape(k * w, -1))
                for a, b in zip(grads.weights, pgrads.weights):
                    a += b
                for a, b in zip(grads.biases, pgrads.biases):
                    a += b

            adam.step(params, grads, lr)
            epoch_losses.append(batch_loss)

        train_loss = float(np.mean(epoch_losses))
        val_loss = _validation_loss(params, val, cfg)
        log.append(epoch, train_loss, val_loss, lr, time.perf_counter() - t_start)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise DivergedTrainingError(
                f"non-finite loss at epoch {epoch}", epoch=epoch
            )

        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()

        if epoch == 0:
            prev_best_for_patience = val_loss
        elif prev_best_for_patience - val_loss > cfg.early_stop_delta:
            prev_best_for_patience = val_loss
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break

    return best_params, log
