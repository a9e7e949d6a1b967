import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from glira.errors import ConfigError
from glira.metrics import auc, metrics_report, roc, tpr_at_fpr

from oracles import pairwise_auc, sweep_tpr_at_fpr


class TestRoc:
    def test_perfect(self):
        curve = roc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert (0.0, 1.0) in curve.points
        assert auc(curve) == 1.0
        assert tpr_at_fpr(curve, 0.0) == 1.0

    def test_all_tied(self):
        curve = roc([0.3] * 6, [1, 0, 1, 0, 0, 1])
        assert curve.points == [(0.0, 0.0), (1.0, 1.0)]
        assert auc(curve) == 0.5

    def test_example(self):
        curve = roc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert auc(curve) == 0.75
        assert tpr_at_fpr(curve, 0.0) == 0.5
        assert tpr_at_fpr(curve, 1.0) == 1.0

    def test_single_class(self):
        with pytest.raises(ConfigError):
            roc([0.1, 0.2], [1, 1])

    def test_length_mismatch(self):
        with pytest.raises(ConfigError):
            roc([0.1, 0.2], [1])

    def test_endpoints(self):
        curve = roc([0.5, 0.1, 0.7], [0, 1, 1])
        assert curve.points[0] == (0.0, 0.0) and curve.points[-1] == (1.0, 1.0)
        assert np.isinf(curve.thresholds[0])


def test_auc_matches_pairwise_statistic():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 40))
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        scores = rng.integers(0, 6, size=n) / 5.0  # plenty of ties
        assert abs(auc(roc(scores, labels)) - pairwise_auc(scores, labels)) < 1e-12


def test_tpr_matches_sweep():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(2, 30))
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        scores = rng.normal(size=n).round(1)
        curve = roc(scores, labels)
        for f in (0.0, 0.1, 0.25, 0.5, 1.0):
            assert tpr_at_fpr(curve, f) == sweep_tpr_at_fpr(scores, labels, f)


# a coarse grid keeps the transform strictly increasing in floating point too
score_lists = st.lists(st.integers(-20, 20).map(lambda k: k / 4), min_size=4, max_size=30)


@given(score_lists, st.randoms(use_true_random=False))
def test_rank_invariance(scores, rnd):
    labels = [rnd.randint(0, 1) for _ in scores]
    labels[0], labels[1] = 0, 1
    a = roc(scores, labels)
    b = roc(np.exp(np.array(scores)) * 3 + 1, labels)
    np.testing.assert_array_equal(a.fpr, b.fpr)
    np.testing.assert_array_equal(a.tpr, b.tpr)
    assert auc(a) == auc(b)


@given(score_lists, st.randoms(use_true_random=False))
def test_tpr_non_decreasing(scores, rnd):
    labels = [rnd.randint(0, 1) for _ in scores]
    labels[0], labels[1] = 0, 1
    curve = roc(scores, labels)
    grid = np.linspace(0, 1, 21)
    values = [tpr_at_fpr(curve, f) for f in grid]
    assert all(b >= a for a, b in zip(values, values[1:]))


class TestReport:
    def test_insufficient_n(self, tmp_path):
        rep, curve = metrics_report([0.9, 0.1, 0.5, 0.4], [1, 0, 1, 0], fpr_grid=(1e-3, 0.5))
        assert rep.tpr_at[1e-3] is None
        assert rep.tpr_at[0.5] == 1.0
        rep.save_json(tmp_path / "m.json")
        data = json.loads((tmp_path / "m.json").read_text())
        assert data["tpr_at"]["0.001"] == "insufficient n"
        assert data["num_members"] == 2 and data["num_nonmembers"] == 2

    def test_curve_files(self, tmp_path):
        _, curve = metrics_report([0.9, 0.1], [1, 0])
        curve.save_json(tmp_path / "r.json")
        curve.save_csv(tmp_path / "r.csv")
        assert json.loads((tmp_path / "r.json").read_text())["fpr"][0] == 0.0
        assert (tmp_path / "r.csv").read_text().splitlines()[0] == "threshold,fpr,tpr"
