import csv

import numpy as np
import pytest

from supercm.data import (
    TEST,
    TRAIN,
    VALIDATION,
    Dataset,
    gaussian_blobs,
    moon_loci,
    sample_batch,
    split_labeled,
    two_moons,
    write_dataset_csv,
)


def test_two_moons_noise_free_on_loci(rng):
    ds = two_moons(200, 0.0, rng)
    x, y = ds.features, ds.labels
    up = x[y == 0]
    lo = x[y == 1]
    np.testing.assert_allclose(np.hypot(up[:, 0], up[:, 1]), 1.0, atol=1e-12)
    assert np.all(up[:, 1] >= -1e-12)
    np.testing.assert_allclose(np.hypot(lo[:, 0] - 1.0, lo[:, 1] - 0.5), 1.0, atol=1e-12)
    assert np.all(lo[:, 1] <= 0.5 + 1e-12)


def test_two_moons_counts_and_splits(rng):
    ds = two_moons(1600, 0.1, rng)
    assert np.bincount(ds.labels).tolist() == [800, 800]
    assert sorted(np.unique(ds.split)) == [TRAIN, VALIDATION, TEST]
    assert np.bincount(ds.split).tolist() == [960, 320, 320]


def test_two_moons_class_means_differ(rng):
    ds = two_moons(1600, 0.1, rng)
    m0 = ds.features[ds.labels == 0, 0].mean()
    m1 = ds.features[ds.labels == 1, 0].mean()
    # noise-free x-means are 0 and 1; noise std of a mean of 800 is ~0.0035
    assert abs((m1 - m0) - 1.0) < 0.05


def test_two_moons_odd_n(rng):
    with pytest.raises(ValueError):
        two_moons(7, 0.1, rng)


def test_generators_deterministic():
    a = two_moons(100, 0.1, np.random.default_rng(5))
    b = two_moons(100, 0.1, np.random.default_rng(5))
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.split, b.split)


def test_blobs_zero_sd(rng):
    ds, centers = gaussian_blobs(3, 5, 2, 4.0, 0.0, rng)
    np.testing.assert_array_equal(ds.features, centers[ds.labels])


def test_blobs_separated_nearest_center(rng):
    ds, _ = gaussian_blobs(2, 200, 3, 1.0, 0.1, rng)
    centers = np.array([[-10.0] * 3, [10.0] * 3])
    x = centers[ds.labels] + rng.normal(0, 0.1, size=ds.features.shape)
    pred = np.argmin(((x[:, None] - centers[None]) ** 2).sum(-1), axis=1)
    assert np.mean(pred == ds.labels) == 1.0


def test_blobs_sample_means_near_centers(rng):
    n_per, sd = 2000, 0.7
    ds, centers = gaussian_blobs(4, n_per, 3, 5.0, sd, rng)
    for c in range(4):
        mean = ds.features[ds.labels == c].mean(axis=0)
        assert np.all(np.abs(mean - centers[c]) < 3 * sd / np.sqrt(n_per) + 1e-12)


def test_split_labeled_counts(rng):
    ds = two_moons(1600, 0.1, rng)
    lab, unl = split_labeled(ds, 3, rng)
    assert lab.size == 6
    assert np.bincount(ds.labels[lab]).tolist() == [3, 3]
    assert np.all(ds.split[lab] == TRAIN) and np.all(ds.split[unl] == TRAIN)
    assert np.intersect1d(lab, unl).size == 0
    assert lab.size + unl.size == ds.indices(TRAIN).size


def test_split_labeled_full_class(rng):
    ds = two_moons(100, 0.1, rng)
    per = int(np.sum((ds.split == TRAIN) & (ds.labels == 0)))
    lab, unl = split_labeled(ds, per, rng)
    assert unl.size == 0


def test_split_labeled_seeds_differ():
    ds = two_moons(1600, 0.1, np.random.default_rng(0))
    a, _ = split_labeled(ds, 3, np.random.default_rng(1))
    b, _ = split_labeled(ds, 3, np.random.default_rng(2))
    assert not np.array_equal(a, b)
    assert np.bincount(ds.labels[a]).tolist() == np.bincount(ds.labels[b]).tolist() == [3, 3]


def test_split_labeled_insufficient(rng):
    ds = two_moons(20, 0.1, rng)
    with pytest.raises(ValueError):
        split_labeled(ds, 50, rng)


def test_sample_batch_subset_and_supervised_only(rng):
    ds = two_moons(200, 0.1, rng)
    lab, unl = split_labeled(ds, 4, rng)
    b = sample_batch(ds, lab, unl, lab.size, 0, 0.0, rng)
    assert b.unlabeled.shape == (0, 2)
    pool = {tuple(r) for r in ds.features[lab]}
    assert all(tuple(r) in pool for r in b.labeled)


def test_sample_batch_needs_labeled(rng):
    ds = two_moons(20, 0.1, rng)
    with pytest.raises(ValueError):
        sample_batch(ds, [], [1, 2], 1, 1, 0.0, rng)


def test_augmentation_noise_std():
    x = np.zeros((1, 2))
    ds = Dataset(np.zeros((2, 2)), np.array([0, 1]), np.array([TRAIN, TRAIN]))
    b = sample_batch(ds, [0, 1], [0, 1], 5000, 5000, 0.3, np.random.default_rng(9))
    noise = np.concatenate([b.labeled.ravel(), b.unlabeled.ravel()])
    assert noise.size == 20_000
    assert abs(noise.std() - 0.3) < 0.03


def test_dataset_csv(tmp_path, rng):
    ds = two_moons(10, 0.1, rng)
    path = tmp_path / "ds.csv"
    write_dataset_csv(path, ds, [0, 3])
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["feature_0", "feature_1", "label", "split", "labeled_flag"]
    assert len(rows) == 11
    assert rows[1][4] == "1" and rows[2][4] == "0"
    assert float(rows[1][0]) == ds.features[0, 0]
