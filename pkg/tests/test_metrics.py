import csv
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supercm.clustering import ClusteringModuleState
from supercm.core_math import ShapeError
from supercm.metrics import (
    confusion_matrix,
    decision_grid,
    exhaustive_match_accuracy,
    hungarian_match_accuracy,
    write_grid_csv,
)
from supercm.mlp import MlpState
from supercm.trainer import ModelConfig, SuperCMModel, evaluate


def test_diagonal_and_antidiagonal():
    acc, perm = hungarian_match_accuracy(np.diag([5, 3, 2]))
    assert acc == 1.0 and perm.tolist() == [0, 1, 2]
    acc, perm = hungarian_match_accuracy([[0, 4], [6, 0]])
    assert acc == 1.0 and perm.tolist() == [1, 0]


def test_non_square():
    with pytest.raises(ShapeError):
        hungarian_match_accuracy(np.zeros((2, 3)))


def _brute(c):
    k = c.shape[0]
    return max(sum(c[p[j], j] for j in range(k)) for p in permutations(range(k))) / c.sum()


def test_random_4x4_against_permutation_search(rng):
    for _ in range(50):
        c = rng.integers(0, 30, size=(4, 4))
        acc, perm = hungarian_match_accuracy(c)
        assert acc == pytest.approx(_brute(c))
        assert sum(c[perm[j], j] for j in range(4)) / c.sum() == pytest.approx(acc)


@given(st.integers(1, 7), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_hungarian_equals_exhaustive(k, seed):
    c = np.random.default_rng(seed).integers(0, 20, size=(k, k))
    c[0, 0] += 1
    h, _ = hungarian_match_accuracy(c)
    e, _ = exhaustive_match_accuracy(c)
    assert h == pytest.approx(e, abs=1e-12)
    assert h >= np.trace(c) / c.sum() - 1e-12


def test_confusion_matrix_counts():
    cm = confusion_matrix([0, 0, 1, 2, 2], [0, 1, 1, 2, 0], 3)
    assert cm.sum() == 5
    assert cm.tolist() == [[1, 1, 0], [0, 1, 0], [1, 0, 1]]


def _const_model():
    net = MlpState([np.zeros((2, 2))], [np.zeros(2)])
    cm = ClusteringModuleState(np.zeros((2, 3)), np.array([0.0, 2.0, 1.0]), np.zeros((3, 2)))
    return SuperCMModel(net, cm)


def test_grid_constant_model_and_size(tmp_path):
    grid = decision_grid(_const_model(), (-1, 1), (-2, 2), 7)
    assert grid.shape == (49, 4)
    assert np.all(grid[:, 2] == 1)
    path = tmp_path / "grid.csv"
    write_grid_csv(path, grid)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x", "y", "pred", "confidence"] and len(rows) == 50


def test_grid_agrees_with_evaluate(rng):
    model = SuperCMModel.init(2, 2, ModelConfig(), rng)
    for p in model.params():
        p += rng.normal(scale=0.5, size=p.shape)
    grid = decision_grid(model, (-1, 1), (-1, 1), 9)
    pts, pred = grid[:, :2], grid[:, 2].astype(int)
    assert evaluate(model, pts, pred) == 1.0
    np.testing.assert_array_equal(pred, model.predict(pts))


def test_grid_rejects_non_2d(rng):
    model = SuperCMModel.init(3, 2, ModelConfig(), rng)
    with pytest.raises(ValueError):
        decision_grid(model, (0, 1), (0, 1), 3)
