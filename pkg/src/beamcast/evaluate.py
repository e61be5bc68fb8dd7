"""Top-K accuracy evaluation, comparison tables, and complexity reports."""

import csv
import time
from dataclasses import dataclass

import numpy as np

from .baselines import count_params
from .errors import ConfigError
from .tensor import no_grad

DEFAULT_KS = (1, 3, 5)


def top_k_set(scores, k):
    """Indices of the k highest scores; ties resolved toward lower indices."""
    order = np.argsort(-np.asarray(scores), kind="stable")
    return order[:k]


def top_k_accuracy(preds, labels, k, step):
    """Fraction of samples whose true beam at `step` is in the top-k set."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n_beams = preds[0].scores.shape[0]
    if k > n_beams:
        raise ValueError(f"k={k} exceeds the codebook size {n_beams}")
    hits = 0
    for pred, lab in zip(preds, labels, strict=True):
        if lab[step] in top_k_set(pred.scores[:, step], k):
            hits += 1
    return hits / len(preds)


@dataclass
class TopKReport:
    ks: tuple
    accuracy: np.ndarray  # [len(ks), t_pred]
    n_test: int
    model_id: str
    mode: str
    pap: bool = False

    def horizon_avg(self, k):
        return float(self.accuracy[self.ks.index(k)].mean())

    def per_step(self, k):
        return self.accuracy[self.ks.index(k)]

    def degradation(self, k):
        """Accuracy drop from the first to the last predicted step."""
        row = self.per_step(k)
        return float(row[0] - row[-1])


def evaluate(model, split, subset="test", ks=DEFAULT_KS, batch_size=64):
    """Run the model on a split subset and tabulate per-step top-K accuracy."""
    if (split.t_hist, split.t_pred) != (model.cfg.t_hist, model.cfg.t_pred):
        raise ConfigError(
            f"split windows are ({split.t_hist}, {split.t_pred}) but the model expects "
            f"({model.cfg.t_hist}, {model.cfg.t_pred})"
        )
    samples = getattr(split, subset)
    if not samples:
        raise ConfigError(f"{subset} subset is empty")
    preds = []
    for i in range(0, len(samples), batch_size):
        chunk = samples[i : i + batch_size]
        preds.extend(model.predict_batch(np.stack([s.history for s in chunk])))
    labels = [s.future_beams for s in samples]
    t_pred = model.cfg.t_pred
    acc = np.zeros((len(ks), t_pred))
    for ki, k in enumerate(ks):
        for j in range(t_pred):
            acc[ki, j] = top_k_accuracy(preds, labels, k, j)
    return TopKReport(
        ks=tuple(ks),
        accuracy=acc,
        n_test=len(samples),
        model_id=model.kind,
        mode=model.cfg.mode,
        pap=bool(getattr(model.cfg, "pap_enabled", False)),
    )


def majority_class_report(split, n_beams, subset="test", ks=DEFAULT_KS):
    """Baseline that always scores beams by their training-label frequency."""
    counts = np.zeros(n_beams)
    for s in split.train:
        for b in s.future_beams:
            counts[b] += 1
    samples = getattr(split, subset)
    t_pred = split.t_pred
    acc = np.zeros((len(ks), t_pred))
    for ki, k in enumerate(ks):
        top = top_k_set(counts, k)
        for j in range(t_pred):
            hits = sum(1 for s in samples if s.future_beams[j] in top)
            acc[ki, j] = hits / len(samples)
    return TopKReport(
        ks=tuple(ks), accuracy=acc, n_test=len(samples), model_id="majority", mode="n/a"
    )


def write_metrics_csv(path, reports):
    """CSV rows: model, mode, pap, K, step, accuracy, n_test (steps 1-based)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "mode", "pap", "K", "step", "accuracy", "n_test"])
        for rep in reports:
            for ki, k in enumerate(rep.ks):
                for j in range(rep.accuracy.shape[1]):
                    writer.writerow(
                        [rep.model_id, rep.mode, int(rep.pap), k, j + 1,
                         repr(float(rep.accuracy[ki, j])), rep.n_test]
                    )


def mean_inference_seconds(model, n_runs=1000, warmup=10, rng=None):
    """Mean wall-clock seconds per single-sample forward, after warmup."""
    rng = rng or np.random.default_rng(0)
    history = rng.uniform(0.0, 1.0, size=(4, model.cfg.t_hist))
    for _ in range(warmup):
        model.forward(history)
    with no_grad():
        start = time.perf_counter()
        for _ in range(n_runs):
            model.forward(history)
        elapsed = time.perf_counter() - start
    return elapsed / n_runs


def complexity_report(models, n_runs=1000):
    """Parameter counts and average per-sample inference time per model."""
    rows = []
    for model in models:
        total, trainable = count_params(model)
        rows.append(
            {
                "model": model.kind,
                "total_params": total,
                "trainable_params": trainable,
                "mean_inference_sec": mean_inference_seconds(model, n_runs=n_runs),
            }
        )
    return rows


def write_complexity_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "total_params", "trainable_params", "mean_inference_sec"])
        for r in rows:
            writer.writerow(
                [r["model"], r["total_params"], r["trainable_params"], repr(r["mean_inference_sec"])]
            )
