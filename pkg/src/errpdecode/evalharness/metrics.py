"""Decoding metrics and summary statistics."""

from __future__ import annotations

import math

import numpy as np

from ..data_model import CORRECT, ERROR


def confusion_counts(true_labels, predicted_labels) -> dict[str, int]:
    """Counts keyed tp/fn/fp/tn with Error as the positive class."""
    t = np.asarray(true_labels)
    p = np.asarray(predicted_labels)
    if t.shape != p.shape:
        raise ValueError("true and predicted labels differ in length")
    return {
        "tp": int(((t == ERROR) & (p == ERROR)).sum()),
        "fn": int(((t == ERROR) & (p != ERROR)).sum()),
        "fp": int(((t == CORRECT) & (p == ERROR)).sum()),
        "tn": int(((t == CORRECT) & (p != ERROR)).sum()),
    }


def normalized_accuracy(true_labels, predicted_labels) -> float:
    """Mean of the Error and Correct recalls; chance level is 0.5."""
    c = confusion_counts(true_labels, predicted_labels)
    n_err = c["tp"] + c["fn"]
    n_corr = c["tn"] + c["fp"]
    if n_err == 0 or n_corr == 0:
        raise ValueError("normalized accuracy needs both classes among the true labels")
    return (c["tp"] / n_err + c["tn"] / n_corr) / 2.0


def sem(values) -> float:
    """Sample standard deviation (n - 1) over sqrt(n)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ValueError("SEM needs at least two values")
    return float(v.std(ddof=1) / math.sqrt(v.size))
