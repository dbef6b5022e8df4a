"""Evaluation metrics: ranking quality, recall under a precision floor, and
contextual user satisfaction for clarification turns."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "UndefinedMetricError",
    "CUSRating",
    "auc",
    "cla",
    "accuracy_with_tuned_threshold",
    "precision_recall_table",
    "cus",
    "session_cus",
]


class UndefinedMetricError(ValueError):
    """The metric needs both classes present in the labels."""


def _scores_labels(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-d sequences of equal length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def auc(scores, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic.

    Equals P(score of a random positive > score of a random negative) plus
    half the tie probability.
    """
    s, y = _scores_labels(scores, labels)
    n_pos = int(y.sum())
    n_neg = int(len(y) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    ranks = rankdata(s)  # average ranks resolve ties as half-credit
    rank_sum_pos = float(ranks[y == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def cla(scores, labels, precision_floor: float = 0.85) -> float:
    """Maximum recall over score thresholds whose precision meets the floor.

    A sample is predicted positive when its score >= threshold; candidate
    thresholds are the distinct scores (every achievable operating point).
    Returns 0 when no threshold qualifies.
    """
    s, y = _scores_labels(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise UndefinedMetricError("CLA needs at least one positive and one negative")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    tp = np.cumsum(y[order] == 1)
    predicted = np.arange(1, len(y) + 1)
    # Operating points sit at the last index of each tied score block.
    last_of_block = np.nonzero(np.diff(s_sorted, append=np.nan))[0]
    precision = tp[last_of_block] / predicted[last_of_block]
    recall = tp[last_of_block] / n_pos
    feasible = precision >= precision_floor
    if not np.any(feasible):
        return 0.0
    return float(np.max(recall[feasible]))


def accuracy_with_tuned_threshold(scores, labels) -> tuple[float, float]:
    """Best classification accuracy over the grid 0.00, 0.01, ..., 1.00.

    A sample is predicted positive when its score >= threshold. Returns
    (accuracy, smallest threshold achieving it).
    """
    s, y = _scores_labels(scores, labels)
    if len(y) == 0:
        raise ValueError("scores must be non-empty")
    thresholds = np.arange(101) / 100.0
    predictions = s[None, :] >= thresholds[:, None]
    accuracies = (predictions == (y[None, :] == 1)).mean(axis=1)
    best = int(np.argmax(accuracies))  # argmax takes the smallest index on ties
    return float(accuracies[best]), float(thresholds[best])


def precision_recall_table(scores, labels, step: float = 0.01) -> list[tuple[float, float, float]]:
    """(threshold, precision, recall) rows over a fixed grid; precision is NaN
    when nothing is predicted positive."""
    s, y = _scores_labels(scores, labels)
    n_pos = int(y.sum())
    rows = []
    for t in np.arange(0.0, 1.0 + step / 2, step):
        pred = s >= t
        tp = int(np.sum(pred & (y == 1)))
        npred = int(np.sum(pred))
        precision = tp / npred if npred else float("nan")
        recall = tp / n_pos if n_pos else float("nan")
        rows.append((float(round(t, 10)), precision, recall))
    return rows


@dataclass(frozen=True)
class CUSRating:
    """Experience of one clarification event: the question turn's rating, the
    post-clarification turn's rating, and their product."""

    turn_rating_n: float
    turn_rating_next: float
    contextual: float

    def __post_init__(self):
        for name in ("turn_rating_n", "turn_rating_next", "contextual"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if self.contextual != self.turn_rating_n * self.turn_rating_next:
            raise ValueError("contextual must equal the product of the turn ratings")


def cus(turn_rating_n: float, turn_rating_next: float) -> CUSRating:
    """Contextual user satisfaction of a clarification turn: the product of the
    rating when the question is asked and the rating of the following turn."""
    a, b = float(turn_rating_n), float(turn_rating_next)
    if not (0.0 <= a <= 1.0) or not (0.0 <= b <= 1.0):
        raise ValueError(f"turn ratings must lie in [0, 1], got {a!r}, {b!r}")
    return CUSRating(turn_rating_n=a, turn_rating_next=b, contextual=a * b)


def session_cus(ratings: Sequence[float], clarification_flags: Sequence[bool]) -> float:
    """Average per-turn experience of one session.

    Clarification turns contribute rating_n * rating_{n+1}; other turns
    contribute their own rating. A clarification on the final logged turn has
    no following rating and uses 1.0, with a warning.
    """
    r = [float(x) for x in ratings]
    flags = [bool(x) for x in clarification_flags]
    if len(r) != len(flags) or not r:
        raise ValueError("ratings and clarification_flags must be non-empty and equal length")
    if any(not (0.0 <= x <= 1.0) for x in r):
        raise ValueError("ratings must lie in [0, 1]")
    dangling = sum(1 for i, f in enumerate(flags) if f and i == len(r) - 1)
    if dangling:
        warnings.warn(
            f"{dangling} clarification turn(s) at session end; using next-rating 1.0",
            stacklevel=2,
        )
    contributions = []
    for i, (rating, flag) in enumerate(zip(r, flags)):
        if flag:
            nxt = r[i + 1] if i + 1 < len(r) else 1.0
            contributions.append(cus(rating, nxt).contextual)
        else:
            contributions.append(rating)
    return float(np.mean(contributions))
