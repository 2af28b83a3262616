"""Evaluation metrics and train/test split plans.

Positive class = accepted within the window. A score at exactly the decision
threshold counts as a positive prediction. AUC uses the rank (Mann-Whitney)
formulation with ties credited one half.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class UndefinedMetricError(ValueError):
    """The metric has no value on this input (e.g. single-class AUC)."""


class DegenerateSplitError(ValueError):
    """A split plan left one side empty."""


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class EvaluationReport:
    auc_roc: float
    accuracy: float
    kappa: float
    sensitivity: float
    specificity: float
    confusion: Confusion
    threshold: float
    n: int

    def to_json_dict(self) -> dict:
        return {
            "auc_roc": self.auc_roc,
            "accuracy": self.accuracy,
            "kappa": self.kappa,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "confusion": {"tp": self.confusion.tp, "fp": self.confusion.fp,
                          "fn": self.confusion.fn, "tn": self.confusion.tn},
            "threshold": self.threshold,
            "n": self.n,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def _as_score_label_arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if y.dtype == bool:
        y = y.astype(np.int64)
    y = y.astype(np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D sequences")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary 0/1")
    return s, y


def _average_ranks(s: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    n = s.size
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    boundaries = np.nonzero(sorted_s[1:] != sorted_s[:-1])[0] + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    group_rank = (starts + 1 + ends) / 2.0
    ranks = np.empty(n)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def auc_roc(scores, labels) -> float:
    """P(random positive outscores random negative), ties counted half."""
    s, y = _as_score_label_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC is undefined with a single class")
    ranks = _average_ranks(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_points(scores, labels) -> list[tuple[float, float, float]]:
    """(fpr, tpr, threshold) swept over the distinct scores, for plotting."""
    s, y = _as_score_label_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC is undefined with a single class")
    points = [(0.0, 0.0, float("inf"))]
    for thr in sorted(set(s.tolist()), reverse=True):
        pred = s >= thr
        tpr = float(np.sum(pred & (y == 1)) / n_pos)
        fpr = float(np.sum(pred & (y == 0)) / n_neg)
        points.append((fpr, tpr, float(thr)))
    return points


def confusion(scores, labels, threshold: float = 0.5) -> Confusion:
    """Counts with score >= threshold predicted positive."""
    s, y = _as_score_label_arrays(scores, labels)
    pred = s >= threshold
    pos = y == 1
    return Confusion(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
        tn=int(np.sum(~pred & ~pos)),
    )


def accuracy(c: Confusion) -> float:
    if c.n == 0:
        raise UndefinedMetricError("accuracy of an empty confusion matrix")
    return (c.tp + c.tn) / c.n


def kappa(c: Confusion) -> float:
    """Cohen's kappa: (p0 - pe) / (1 - pe) with pe from the marginals."""
    n = c.n
    if n == 0:
        raise UndefinedMetricError("kappa of an empty confusion matrix")
    p0 = (c.tp + c.tn) / n
    pe = ((c.tp + c.fp) * (c.tp + c.fn) + (c.fn + c.tn) * (c.fp + c.tn)) / (n * n)
    if pe == 1.0:
        raise UndefinedMetricError("kappa undefined: chance agreement is 1")
    return (p0 - pe) / (1.0 - pe)


def sensitivity_specificity(c: Confusion) -> tuple[float, float]:
    """(true positive rate, true negative rate)."""
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("sensitivity undefined: no positive examples")
    if c.tn + c.fp == 0:
        raise UndefinedMetricError("specificity undefined: no negative examples")
    return c.tp / (c.tp + c.fn), c.tn / (c.tn + c.fp)


def evaluate(scores, labels, threshold: float = 0.5) -> EvaluationReport:
    c = confusion(scores, labels, threshold)
    sens, spec = sensitivity_specificity(c)
    return EvaluationReport(
        auc_roc=auc_roc(scores, labels),
        accuracy=accuracy(c),
        kappa=kappa(c),
        sensitivity=sens,
        specificity=spec,
        confusion=c,
        threshold=threshold,
        n=c.n,
    )


@dataclass(frozen=True)
class SplitPlan:
    """RANDOM {train_fraction, seed} or TEMPORAL {cutoff}."""

    kind: str
    train_fraction: float = 0.7
    seed: int = 0
    cutoff: int | None = None

    def __post_init__(self) -> None:
        if self.kind == "RANDOM":
            if not 0.0 < self.train_fraction < 1.0:
                raise ValueError(f"train_fraction must be in (0,1), got {self.train_fraction}")
        elif self.kind == "TEMPORAL":
            if self.cutoff is None:
                raise ValueError("TEMPORAL plan needs a cutoff timestamp")
        else:
            raise ValueError(f"unknown split kind {self.kind!r}")

    def to_json_dict(self) -> dict:
        if self.kind == "RANDOM":
            return {"kind": "RANDOM", "train_fraction": self.train_fraction, "seed": self.seed}
        return {"kind": "TEMPORAL", "cutoff": self.cutoff}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SplitPlan":
        if doc["kind"] == "RANDOM":
            return cls("RANDOM", train_fraction=float(doc.get("train_fraction", 0.7)),
                       seed=int(doc.get("seed", 0)))
        return cls("TEMPORAL", cutoff=int(doc["cutoff"]))


def split(dataset: Sequence, plan: SplitPlan) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint, exhaustive (train_indices, test_indices) for the plan.

    RANDOM draws round(train_fraction * n) rows with a seeded permutation.
    TEMPORAL puts created_at <= cutoff in train; items must expose a
    ``created_at`` attribute or be timestamps themselves.
    """
    n = len(dataset)
    if n == 0:
        raise DegenerateSplitError("cannot split an empty dataset")
    if plan.kind == "RANDOM":
        k = int(np.floor(plan.train_fraction * n + 0.5))
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(plan.seed)))
        perm = rng.permutation(n)
        train = np.sort(perm[:k])
        test = np.sort(perm[k:])
    else:
        ts = np.array(
            [getattr(item, "created_at", item) for item in dataset], dtype=np.int64
        )
        train = np.nonzero(ts <= plan.cutoff)[0]
        test = np.nonzero(ts > plan.cutoff)[0]
    if train.size == 0 or test.size == 0:
        raise DegenerateSplitError(
            f"split left an empty side (train={train.size}, test={test.size})"
        )
    return train, test
