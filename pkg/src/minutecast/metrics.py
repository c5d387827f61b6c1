"""Per-label threshold moving, binary decisions, and the two F1 metrics.

Decision rule is boundary-inclusive: predict label i when probability >= its
threshold. Threshold search evaluates F1 at every midpoint between adjacent
distinct scores plus {0, 1}; ties go to the largest threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def f1_from_counts(tp: float, fp: float, fn: float) -> float:
    denom = 2.0 * tp + fp + fn
    return 2.0 * tp / denom if denom > 0 else 0.0


def optimal_threshold(scores, labels) -> tuple[float, float]:
    """Best (threshold, F1) for one label along its precision-recall curve.

    With no positive labels the threshold is 1.0 by convention (the label is
    never predicted) and F1 is 0.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise ValueError("optimal_threshold needs at least one score")
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    if labels.sum() == 0:
        return 1.0, 0.0
    uniq = np.unique(scores)
    candidates = np.concatenate(([0.0], (uniq[:-1] + uniq[1:]) / 2.0, [1.0]))
    best_tau, best_f1 = 0.0, -1.0
    pos = labels.astype(bool)
    for tau in candidates:
        pred = scores >= tau
        tp = float(np.sum(pred & pos))
        fp = float(np.sum(pred & ~pos))
        fn = float(np.sum(~pred & pos))
        f1 = f1_from_counts(tp, fp, fn)
        if f1 >= best_f1:  # scanning ascending, so ties keep the largest tau
            best_tau, best_f1 = float(tau), f1
    return best_tau, best_f1


@dataclass
class ThresholdVector:
    """One calibrated decision threshold per activity label."""

    thresholds: np.ndarray
    validation_f1: np.ndarray

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=np.float64)
        self.validation_f1 = np.asarray(self.validation_f1, dtype=np.float64)
        if np.any(self.thresholds < 0) or np.any(self.thresholds > 1):
            raise ValueError("thresholds must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "thresholds": self.thresholds.tolist(),
            "validation_f1": self.validation_f1.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ThresholdVector":
        return cls(np.array(doc["thresholds"]), np.array(doc["validation_f1"]))


def calibrate_thresholds(probs: np.ndarray, truths: np.ndarray) -> ThresholdVector:
    """Independent threshold moving per label over validation probabilities."""
    if probs.size == 0:
        raise ValueError("cannot calibrate on an empty validation set")
    if probs.shape != truths.shape:
        raise ValueError("probs and truths must have the same shape")
    taus = np.empty(probs.shape[1])
    f1s = np.empty(probs.shape[1])
    for i in range(probs.shape[1]):
        taus[i], f1s[i] = optimal_threshold(probs[:, i], truths[:, i])
    return ThresholdVector(taus, f1s)


def decide(probs: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Binary predictions: bit set iff probability >= per-label threshold."""
    probs = np.atleast_2d(probs)
    if probs.shape[1] != np.asarray(thresholds).shape[-1]:
        raise ValueError("thresholds length must equal the number of labels")
    return (probs >= np.asarray(thresholds)[None, :]).astype(np.float64)


@dataclass
class EvalReport:
    """Per-label confusion counts and F1 plus the two aggregate metrics."""

    labels: tuple[str, ...]
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    support: np.ndarray
    f1: np.ndarray
    weighted_f1: float
    samples_f1: float
    split: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "split": self.split,
            "weighted_f1": self.weighted_f1,
            "samples_f1": self.samples_f1,
            "per_label": [
                {
                    "label": name,
                    "tp": int(self.tp[i]),
                    "fp": int(self.fp[i]),
                    "fn": int(self.fn[i]),
                    "support": int(self.support[i]),
                    "f1": float(self.f1[i]),
                }
                for i, name in enumerate(self.labels)
            ],
            **self.extra,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        rows = doc["per_label"]
        return cls(
            labels=tuple(r["label"] for r in rows),
            tp=np.array([r["tp"] for r in rows], dtype=np.float64),
            fp=np.array([r["fp"] for r in rows], dtype=np.float64),
            fn=np.array([r["fn"] for r in rows], dtype=np.float64),
            support=np.array([r["support"] for r in rows], dtype=np.float64),
            f1=np.array([r["f1"] for r in rows]),
            weighted_f1=doc["weighted_f1"],
            samples_f1=doc["samples_f1"],
            split=doc.get("split", ""),
        )


def per_label_counts(preds: np.ndarray, truths: np.ndarray):
    if preds.shape != truths.shape:
        raise ValueError("preds and truths must have the same shape")
    p = preds.astype(bool)
    t = truths.astype(bool)
    tp = (p & t).sum(axis=0).astype(np.float64)
    fp = (p & ~t).sum(axis=0).astype(np.float64)
    fn = (~p & t).sum(axis=0).astype(np.float64)
    return tp, fp, fn


def per_label_f1(preds: np.ndarray, truths: np.ndarray) -> np.ndarray:
    tp, fp, fn = per_label_counts(preds, truths)
    denom = 2.0 * tp + fp + fn
    return np.where(denom > 0, 2.0 * tp / np.maximum(denom, 1.0), 0.0)


def weighted_f1(f1: np.ndarray, support: np.ndarray) -> float:
    """Support-weighted mean of per-label F1; zero-support labels contribute
    nothing; 0 if nothing has support."""
    total = support.sum()
    if total == 0:
        return 0.0
    return float((f1 * support).sum() / total)


def samples_f1(preds: np.ndarray, truths: np.ndarray, empty_value: float = 1.0) -> float:
    """Mean per-sample set-overlap F1: 2|pred & truth| / (|pred| + |truth|).

    A sample where both sets are empty counts as empty_value (1.0 by default;
    the published texts leave this case unspecified, so it stays a knob).
    """
    if preds.shape != truths.shape:
        raise ValueError("preds and truths must have the same shape")
    p = preds.astype(bool)
    t = truths.astype(bool)
    inter = (p & t).sum(axis=1).astype(np.float64)
    sizes = p.sum(axis=1) + t.sum(axis=1)
    per_sample = np.where(sizes > 0, 2.0 * inter / np.maximum(sizes, 1), empty_value)
    return float(per_sample.mean())


def build_report(preds, truths, label_names, split: str = "") -> EvalReport:
    tp, fp, fn = per_label_counts(preds, truths)
    support = truths.astype(bool).sum(axis=0).astype(np.float64)
    f1 = per_label_f1(preds, truths)
    return EvalReport(
        labels=tuple(label_names),
        tp=tp,
        fp=fp,
        fn=fn,
        support=support,
        f1=f1,
        weighted_f1=weighted_f1(f1, support),
        samples_f1=samples_f1(preds, truths),
        split=split,
    )
