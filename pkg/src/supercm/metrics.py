"""Clustering accuracy under the best cluster-to-class matching, and decision
grids for 2-D boundary plots."""
import csv
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core_math import ShapeError

GRID_CSV_HEADER = ("x", "y", "pred", "confidence")
EXHAUSTIVE_MAX_K = 8


def confusion_matrix(true_labels, pred_clusters, k: int) -> np.ndarray:
    """Counts indexed ``[true class, predicted cluster]``."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(pred_clusters, dtype=np.int64)
    if t.shape != p.shape:
        raise ShapeError("label and prediction vectors differ in length")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def _check_square(confusion) -> np.ndarray:
    c = np.asarray(confusion)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ShapeError(f"confusion matrix must be square, got {c.shape}")
    return c


def exhaustive_match_accuracy(confusion):
    """Brute-force max-trace matching over all K! permutations (K <= 8)."""
    c = _check_square(confusion)
    k = c.shape[0]
    if k > EXHAUSTIVE_MAX_K:
        raise ValueError(f"exhaustive search refused for K={k} > {EXHAUSTIVE_MAX_K}")
    total = c.sum()
    best, best_perm = -1, None
    for perm in permutations(range(k)):
        # perm[cluster] = class
        score = sum(c[perm[j], j] for j in range(k))
        if score > best:
            best, best_perm = score, perm
    return (float(best / total) if total else 0.0), np.array(best_perm)


def hungarian_match_accuracy(confusion):
    """Accuracy after optimally relabeling clusters; returns
    ``(accuracy, perm)`` with ``perm[cluster] = class``."""
    c = _check_square(confusion)
    total = c.sum()
    rows, cols = linear_sum_assignment(c, maximize=True)
    perm = np.empty(c.shape[0], dtype=np.int64)
    perm[cols] = rows
    matched = c[rows, cols].sum()
    return (float(matched / total) if total else 0.0), perm


def decision_grid(model, x_range, y_range, resolution: int) -> np.ndarray:
    """Predicted class and max responsibility on a ``resolution``-squared
    lattice; columns are x, y, pred, confidence."""
    d_in = model.mlp.weights[0].shape[0]
    if d_in != 2:
        raise ValueError(f"decision_grid needs a 2-D input model, got {d_in} inputs")
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    xs = np.linspace(x_range[0], x_range[1], resolution)
    ys = np.linspace(y_range[0], y_range[1], resolution)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    probs = model.predict_proba(pts)
    return np.column_stack([pts, np.argmax(probs, axis=1), probs.max(axis=1)])


def write_grid_csv(path, grid) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GRID_CSV_HEADER)
        for x, y, pred, conf in grid:
            w.writerow([repr(float(x)), repr(float(y)), int(pred), repr(float(conf))])
