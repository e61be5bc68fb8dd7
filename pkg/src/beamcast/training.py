"""Supervised training loop: batching, loss, Adam with the decay schedule."""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError
from .optim import Adam, DEFAULT_MILESTONES, LrSchedule, lr_at
from .tensor import no_grad, sequence_cross_entropy

MODE_SHAPES = {"standard": (8, 5), "fewshot": (3, 10)}

HISTORY_COLUMNS = ("epoch", "lr", "train_loss", "val_loss", "train_top1")


@dataclass
class TrainConfig:
    batch_size: int = 16
    base_lr: float = 0.01
    milestones: tuple = DEFAULT_MILESTONES
    gamma: float = 0.9
    epochs: int = 200
    seed: int = 0
    mode: str = "standard"
    pap_enabled: bool = True

    def __post_init__(self):
        if self.mode not in MODE_SHAPES:
            raise ConfigError(f"mode must be standard or fewshot, got {self.mode!r}")
        if min(self.batch_size, self.epochs) < 1 or self.base_lr <= 0:
            raise ConfigError("batch_size, epochs must be >= 1 and base_lr > 0")

    @property
    def shape(self):
        return MODE_SHAPES[self.mode]

    def schedule(self):
        return LrSchedule(base_lr=self.base_lr, milestones=tuple(self.milestones), gamma=self.gamma)


@dataclass
class TrainResult:
    history: list
    best_epoch: int
    best_val_top1: float


def _stack_batch(samples, n_beams):
    hists = np.stack([s.history for s in samples])
    targets = np.stack([s.future_beams for s in samples])
    if targets.min() < 0 or targets.max() >= n_beams:
        raise ValidationError(
            f"beam labels must lie in [0, {n_beams}), got range "
            f"[{targets.min()}, {targets.max()}]"
        )
    return hists, targets


def loss_batch(model, samples):
    """Mean over samples of the horizon-summed cross-entropy (natural log)."""
    if not samples:
        raise ValidationError("loss_batch needs a non-empty batch")
    hists, targets = _stack_batch(samples, model.cfg.n_beams)
    logits = model.forward_batch(hists)
    return sequence_cross_entropy(logits, targets)


def _top1_and_loss(model, samples, batch_size):
    """Tape-free loss and top-1 accuracy over a sample list."""
    total_loss = 0.0
    hits = 0
    steps = 0
    with no_grad():
        for i in range(0, len(samples), batch_size):
            chunk = samples[i : i + batch_size]
            hists, targets = _stack_batch(chunk, model.cfg.n_beams)
            logits = model.forward_batch(hists)
            total_loss += float(sequence_cross_entropy(logits, targets)) * len(chunk)
            pred = np.argmax(logits.data, axis=-1)
            hits += int((pred == targets).sum())
            steps += targets.size
    return total_loss / len(samples), hits / steps


def train(model, split, cfg, ckpt_path=None, log_every=0):
    """Train in place; finishes with the best-validation-top-1 parameters.

    Shuffling, batching, and updates are fully deterministic given
    (model init, split, cfg.seed). Returns a TrainResult whose history has
    one entry per epoch. When `ckpt_path` is given the best-val snapshot is
    also written there as a checkpoint.
    """
    if not split.train:
        raise ConfigError("empty training split")
    if (split.t_hist, split.t_pred) != (model.cfg.t_hist, model.cfg.t_pred):
        raise ConfigError(
            f"split windows are ({split.t_hist}, {split.t_pred}) but the model expects "
            f"({model.cfg.t_hist}, {model.cfg.t_pred})"
        )
    schedule = cfg.schedule()
    optimizer = Adam(model.trainables.trainable(), lr=cfg.base_lr)
    rng = np.random.default_rng(cfg.seed)
    n = len(split.train)
    history = []
    best_val_top1 = -1.0
    best_epoch = -1
    best_state = None
    for epoch in range(cfg.epochs):
        lr = lr_at(schedule, epoch)
        order = rng.permutation(n)
        epoch_loss = 0.0
        hits = 0
        steps = 0
        for i in range(0, n, cfg.batch_size):
            batch = [split.train[j] for j in order[i : i + cfg.batch_size]]
            hists, targets = _stack_batch(batch, model.cfg.n_beams)
            logits = model.forward_batch(hists)
            loss = sequence_cross_entropy(logits, targets)
            value = float(loss)
            if not np.isfinite(value):
                raise ValueError(f"non-finite training loss at epoch {epoch}")
            hits += int((np.argmax(logits.data, axis=-1) == targets).sum())
            steps += targets.size
            epoch_loss += value * len(batch)
            loss.backward()
            optimizer.step(lr=lr)
        val_loss, val_top1 = (
            _top1_and_loss(model, split.val, cfg.batch_size) if split.val else (float("nan"), 0.0)
        )
        entry = {
            "epoch": epoch,
            "lr": lr,
            "train_loss": epoch_loss / n,
            "val_loss": val_loss,
            "train_top1": hits / steps,
            "val_top1": val_top1,
        }
        history.append(entry)
        if log_every and epoch % log_every == 0:
            print(
                f"epoch {epoch:4d} lr {lr:.5f} train_loss {entry['train_loss']:.4f} "
                f"val_loss {val_loss:.4f} train_top1 {entry['train_top1']:.3f} val_top1 {val_top1:.3f}"
            )
        if val_top1 > best_val_top1:
            best_val_top1 = val_top1
            best_epoch = epoch
            best_state = {p.name: p.tensor.data.copy() for p in model.trainables}
    if best_state is not None:
        for p in model.trainables:
            p.tensor.data[...] = best_state[p.name]
    if ckpt_path is not None:
        from .checkpoint import save_checkpoint

        save_checkpoint(ckpt_path, model.params, meta=model.manifest_meta())
    return TrainResult(history=history, best_epoch=best_epoch, best_val_top1=best_val_top1)


def write_history_csv(path, history):
    """Per-epoch training curves with the fixed public column set."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(HISTORY_COLUMNS)
        for entry in history:
            writer.writerow([repr(entry[c]) if isinstance(entry[c], float) else entry[c] for c in HISTORY_COLUMNS])
