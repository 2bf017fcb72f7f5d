"""Trial statistics and classification scores."""
from __future__ import annotations

import math

import numpy as np


class MetricError(ValueError):
    pass


def trimmed_trials(values, trim_fraction: float = 0.05) -> np.ndarray:
    """Sort and drop ``floor(trim_fraction * len)`` values from each end."""
    v = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    if len(v) == 0:
        raise MetricError("no trials to trim")
    if not 0 <= trim_fraction < 0.5:
        raise MetricError(f"trim_fraction must lie in [0, 0.5), got {trim_fraction}")
    k = math.floor(trim_fraction * len(v) + 1e-9)
    if 2 * k >= len(v):
        raise MetricError(f"trimming {k} per side leaves nothing of {len(v)} trials")
    return v[k:len(v) - k]


def probability_of_recovery(errors, threshold: float) -> float:
    """Fraction of trials whose error is at most ``threshold``."""
    e = np.asarray(errors, dtype=np.float64).reshape(-1)
    if len(e) == 0:
        raise MetricError("no trials")
    return float(np.mean(e <= threshold))


def _check_labels(labels) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if not np.all(np.abs(y) == 1):
        raise MetricError("labels must be +1 or -1")
    if np.all(y == 1) or np.all(y == -1):
        raise MetricError("both classes must be present")
    return y


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ranks = np.empty(len(x))
    # tied runs share the mean of the 1-based ranks they span
    edges = np.flatnonzero(np.diff(xs)) + 1
    starts = np.concatenate([[0], edges])
    ends = np.concatenate([edges, [len(x)]])
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = 0.5 * (a + b + 1)
    return ranks


def auc(scores, labels) -> float:
    """Chance that a random positive outscores a random negative, ties counting half."""
    y = _check_labels(labels)
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(s) != len(y):
        raise MetricError("scores and labels differ in length")
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    rank_sum = _average_ranks(s)[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def balanced_error(predictions, labels) -> float:
    """Mean of the false-negative and false-positive rates."""
    y = _check_labels(labels)
    pred = np.asarray(predictions, dtype=np.float64).reshape(-1)
    if len(pred) != len(y):
        raise MetricError("predictions and labels differ in length")
    pos = y == 1
    fnr = np.mean(pred[pos] != 1)
    fpr = np.mean(pred[~pos] == 1)
    return float(0.5 * (fnr + fpr))


def kfold_split(m: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle ``range(m)`` and cut it into ``k`` folds whose sizes differ by at most one."""
    if not 1 <= k <= m:
        raise MetricError(f"need 1 <= k <= m, got k={k}, m={m}")
    perm = rng.permutation(m)
    return [np.sort(f) for f in np.array_split(perm, k)]
