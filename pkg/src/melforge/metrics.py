"""Confusion counts and unweighted average recall (UAR).

UAR is the mean of the two per-class recalls, so it is insensitive to
class imbalance; label 1 ("mask") is the positive class.
"""

from __future__ import annotations

from dataclasses import dataclass


class DegenerateClassError(ValueError):
    """A class has no ground-truth members, so its recall is undefined."""


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(probs, labels, threshold: float = 0.5) -> ConfusionMatrix:
    """Binarize probabilities (>= threshold counts positive) and tally.

    Raises on empty or mismatched inputs.
    """
    probs = list(probs)
    labels = list(labels)
    if len(probs) != len(labels):
        raise ValueError(f"length mismatch: {len(probs)} probs vs {len(labels)} labels")
    if not probs:
        raise ValueError("cannot score an empty prediction list")
    cm = ConfusionMatrix()
    for p, y in zip(probs, labels):
        if y not in (0, 1):
            raise ValueError(f"labels must be 0 or 1, got {y!r}")
        predicted = p >= threshold
        if predicted and y == 1:
            cm.tp += 1
        elif predicted and y == 0:
            cm.fp += 1
        elif not predicted and y == 0:
            cm.tn += 1
        else:
            cm.fn += 1
    return cm


def uar(cm: ConfusionMatrix) -> float:
    """0.5 * (TP/(FN+TP) + TN/(TN+FP))."""
    if cm.tp + cm.fn == 0:
        raise DegenerateClassError("no positive ground-truth samples")
    if cm.tn + cm.fp == 0:
        raise DegenerateClassError("no negative ground-truth samples")
    return 0.5 * (cm.tp / (cm.fn + cm.tp) + cm.tn / (cm.tn + cm.fp))
