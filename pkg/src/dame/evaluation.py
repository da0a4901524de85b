"""Scoring record pairs and turning predictions into match-quality metrics.

The match class (label 1) is the positive class everywhere.  A pair is
predicted as a match when its match probability strictly exceeds 1/2, which
for two classes is exactly the argmax rule.
"""

from __future__ import annotations

import csv
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch

from .encoder import batch_tensors
from .model import DameModel
from .records import PairCodec, RecordPair


@dataclass(frozen=True)
class MetricReport:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    accuracy: float

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "accuracy": self.accuracy,
        }


def metrics_from_counts(tp: int, fp: int, tn: int, fn: int) -> MetricReport:
    """Precision, recall, F1, accuracy; any zero denominator gives 0.0."""
    for name, v in (("tp", tp), ("fp", fp), ("tn", tn), ("fn", fn)):
        if v < 0:
            raise ValueError(f"{name} must be non-negative, got {v}")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
    total = tp + fp + tn + fn
    accuracy = (tp + tn) / total if total else 0.0
    return MetricReport(tp, fp, tn, fn, precision, recall, f1, accuracy)


def compute_metrics(y_true: Sequence[int], y_pred: Sequence[int]) -> MetricReport:
    if len(y_true) != len(y_pred):
        raise ValueError(f"got {len(y_true)} labels but {len(y_pred)} predictions")
    tp = fp = tn = fn = 0
    for t, p in zip(y_true, y_pred):
        if t not in (0, 1) or p not in (0, 1):
            raise ValueError(f"labels and predictions must be 0/1, got ({t}, {p})")
        if t == 1 and p == 1:
            tp += 1
        elif t == 0 and p == 1:
            fp += 1
        elif t == 0 and p == 0:
            tn += 1
        else:
            fn += 1
    return metrics_from_counts(tp, fp, tn, fn)


@contextmanager
def _eval_mode(model: DameModel) -> Iterator[None]:
    was_training = model.training
    model.eval()
    try:
        yield
    finally:
        if was_training:
            model.train()


def _batches(n: int, batch_size: int) -> Iterator[range]:
    for start in range(0, n, batch_size):
        yield range(start, min(start + batch_size, n))


def predict_probs(
    model: DameModel,
    pairs: Sequence[RecordPair],
    codec: PairCodec,
    batch_size: int = 64,
) -> np.ndarray:
    """Match-class probability table (n, 2), deterministic in eval mode."""
    out = np.empty((len(pairs), 2), dtype=np.float64)
    with _eval_mode(model), torch.no_grad():
        for chunk in _batches(len(pairs), batch_size):
            ids, mask = batch_tensors(codec.encode_pairs([pairs[i] for i in chunk]))
            probs = torch.softmax(model(ids, mask), dim=-1)
            out[chunk.start : chunk.stop] = probs.double().numpy()
    return out


def fused_embeddings(
    model: DameModel,
    pairs: Sequence[RecordPair],
    codec: PairCodec,
    batch_size: int = 64,
) -> np.ndarray:
    """Fused pair representations (n, d) in eval mode."""
    out = np.empty((len(pairs), model.encoder_cfg.d), dtype=np.float64)
    with _eval_mode(model), torch.no_grad():
        for chunk in _batches(len(pairs), batch_size):
            ids, mask = batch_tensors(codec.encode_pairs([pairs[i] for i in chunk]))
            fused, _ = model.fuse(ids, mask)
            out[chunk.start : chunk.stop] = fused.double().numpy()
    return out


def _true_labels(pairs: Sequence[RecordPair]) -> list[int]:
    labels = []
    for i, p in enumerate(pairs):
        if p.label is None:
            raise ValueError(f"pair {i} has no label; evaluation needs labeled pairs")
        labels.append(p.label)
    return labels


def predictions_from_probs(probs: np.ndarray) -> list[int]:
    return [int(row[1] > row[0]) for row in probs]


def evaluate(
    model: DameModel,
    pairs: Sequence[RecordPair],
    codec: PairCodec,
    batch_size: int = 64,
) -> MetricReport:
    """Metrics of the full fused model on labeled pairs."""
    labels = _true_labels(pairs)
    probs = predict_probs(model, pairs, codec, batch_size)
    return compute_metrics(labels, predictions_from_probs(probs))


def evaluate_expert_subset(
    model: DameModel,
    pairs: Sequence[RecordPair],
    codec: PairCodec,
    subset: Sequence[int],
    batch_size: int = 64,
) -> MetricReport:
    """Metrics when only the given experts participate in the fusion."""
    labels = _true_labels(pairs)
    preds: list[int] = []
    with _eval_mode(model), torch.no_grad():
        for chunk in _batches(len(pairs), batch_size):
            ids, mask = batch_tensors(codec.encode_pairs([pairs[i] for i in chunk]))
            logits = model.subset_forward(ids, mask, subset)
            preds.extend(int(v) for v in logits.argmax(dim=-1))
    return compute_metrics(labels, preds)


def global_only_evaluate(
    model: DameModel,
    pairs: Sequence[RecordPair],
    codec: PairCodec,
    batch_size: int = 64,
) -> MetricReport:
    """Metrics of the global encoder's own head, bypassing the mixture."""
    labels = _true_labels(pairs)
    preds: list[int] = []
    with _eval_mode(model), torch.no_grad():
        for chunk in _batches(len(pairs), batch_size):
            ids, mask = batch_tensors(codec.encode_pairs([pairs[i] for i in chunk]))
            logits = model.global_logits(ids, mask)
            preds.extend(int(v) for v in logits.argmax(dim=-1))
    return compute_metrics(labels, preds)


def export_embeddings(
    model: DameModel,
    pairs: Sequence[RecordPair],
    codec: PairCodec,
    path: str | Path,
    batch_size: int = 64,
) -> None:
    """Write fused embeddings to CSV: id, label, then one column per dimension.

    The id column is the pair's position in the input sequence; unlabeled
    pairs leave the label cell empty.
    """
    emb = fused_embeddings(model, pairs, codec, batch_size)
    d = emb.shape[1]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", *(f"f{i}" for i in range(d))])
        for i, pair in enumerate(pairs):
            label: object = "" if pair.label is None else pair.label
            writer.writerow([i, label, *(repr(float(v)) for v in emb[i])])
