"""Synthetic datasets, labeled/unlabeled splits and mini-batch sampling."""
import csv
from dataclasses import dataclass

import numpy as np

TRAIN, VALIDATION, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "validation", "test")
SPLIT_FRACTIONS = (0.6, 0.2, 0.2)


@dataclass
class Dataset:
    features: np.ndarray  # N x d_in
    labels: np.ndarray  # N, int
    split: np.ndarray  # N, one of TRAIN / VALIDATION / TEST

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def indices(self, split: int) -> np.ndarray:
        return np.flatnonzero(self.split == split)

    def subset(self, split: int):
        idx = self.indices(split)
        return self.features[idx], self.labels[idx]


@dataclass
class Batch:
    labeled: np.ndarray
    labels: np.ndarray
    unlabeled: np.ndarray


def assign_splits(labels, rng, fractions=SPLIT_FRACTIONS) -> np.ndarray:
    """Stratified train/validation/test tags; rounding leftovers go to train."""
    labels = np.asarray(labels)
    split = np.empty(labels.shape[0], dtype=np.int64)
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        n_val = int(round(fractions[1] * idx.size))
        n_test = int(round(fractions[2] * idx.size))
        n_train = idx.size - n_val - n_test
        split[idx[:n_train]] = TRAIN
        split[idx[n_train : n_train + n_val]] = VALIDATION
        split[idx[n_train + n_val :]] = TEST
    return split


def moon_loci(n_per: int):
    """Noise-free interleaved half circles of radius 1 (upper moon centred at
    the origin, lower moon flipped and centred at (1, 0.5))."""
    t = np.linspace(0.0, np.pi, n_per)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    return upper, lower


def two_moons(n: int, noise_sd: float, rng, fractions=SPLIT_FRACTIONS) -> Dataset:
    if n < 2 or n % 2:
        raise ValueError(f"two_moons needs an even n >= 2, got {n}")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    upper, lower = moon_loci(n // 2)
    x = np.vstack([upper, lower])
    if noise_sd > 0:
        x = x + rng.normal(0.0, noise_sd, size=x.shape)
    y = np.repeat(np.arange(2), n // 2)
    return Dataset(x, y, assign_splits(y, rng, fractions))


def gaussian_blobs(
    k: int, n_per: int, d: int, center_scale: float, cluster_sd: float, rng, fractions=SPLIT_FRACTIONS
):
    """Isotropic blobs around centres drawn uniformly in the cube
    ``[-center_scale, center_scale]^d``. Returns ``(dataset, centers)``."""
    if k < 2 or n_per < 1 or d < 1:
        raise ValueError("gaussian_blobs needs k >= 2, n_per >= 1, d >= 1")
    if cluster_sd < 0:
        raise ValueError("cluster_sd must be non-negative")
    centers = rng.uniform(-center_scale, center_scale, size=(k, d))
    y = np.repeat(np.arange(k), n_per)
    x = centers[y] + (rng.normal(0.0, cluster_sd, size=(k * n_per, d)) if cluster_sd > 0 else 0.0)
    return Dataset(x, y, assign_splits(y, rng, fractions)), centers


def split_labeled(ds: Dataset, labels_per_class: int, rng):
    """Pick exactly ``labels_per_class`` labeled training samples per class;
    the rest of the training split becomes the unlabeled pool."""
    train = ds.indices(TRAIN)
    labeled = []
    for c in range(ds.n_classes):
        pool = train[ds.labels[train] == c]
        if pool.size < labels_per_class:
            raise ValueError(
                f"class {c} has {pool.size} training samples, {labels_per_class} labels requested"
            )
        labeled.append(rng.choice(pool, size=labels_per_class, replace=False))
    labeled = np.sort(np.concatenate(labeled))
    unlabeled = np.setdiff1d(train, labeled)
    return labeled, unlabeled


def sample_batch(ds: Dataset, labeled_idx, unlabeled_idx, n_l: int, n_u: int, noise_sd: float, rng) -> Batch:
    """Draw with replacement from each pool and add Gaussian noise augmentation."""
    if len(labeled_idx) == 0 or n_l < 1:
        raise ValueError("a training batch needs at least one labeled sample")
    li = rng.choice(labeled_idx, size=n_l, replace=True)
    xl = ds.features[li]
    if n_u > 0:
        if len(unlabeled_idx) == 0:
            raise ValueError("unlabeled samples requested from an empty pool")
        xu = ds.features[rng.choice(unlabeled_idx, size=n_u, replace=True)]
    else:
        xu = ds.features[:0]
    if noise_sd > 0:
        xl = xl + rng.normal(0.0, noise_sd, size=xl.shape)
        xu = xu + rng.normal(0.0, noise_sd, size=xu.shape)
    return Batch(xl, ds.labels[li], xu)


def write_dataset_csv(path, ds: Dataset, labeled_idx=()) -> None:
    flag = np.zeros(ds.labels.shape[0], dtype=int)
    flag[np.asarray(labeled_idx, dtype=int)] = 1
    d = ds.features.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"feature_{j}" for j in range(d)] + ["label", "split", "labeled_flag"])
        for i in range(ds.labels.shape[0]):
            w.writerow(
                [repr(float(v)) for v in ds.features[i]]
                + [int(ds.labels[i]), SPLIT_NAMES[ds.split[i]], int(flag[i])]
            )
