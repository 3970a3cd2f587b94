import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from knowtrace.data import Dataset, Sequence
from knowtrace.errors import MetricError
from knowtrace.metrics import accuracy, auc, evaluate, mape, rmse
from knowtrace.params import ModelParams


def brute_auc(pred, truth):
    pos = [p for p, t in zip(pred, truth) if t == 1]
    neg = [p for p, t in zip(pred, truth) if t == 0]
    score = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a, b in itertools.product(pos, neg))
    return score / (len(pos) * len(neg))


def test_rmse_examples():
    assert rmse([0.0, 1.0, 1.0], [0, 1, 1]) == 0.0
    assert rmse([0.5, 0.5], [0, 1]) == 0.5
    assert rmse([0.2, 0.9, 0.4], [0, 1, 1]) == pytest.approx(math.sqrt((0.04 + 0.01 + 0.36) / 3), abs=1e-12)


def test_accuracy_examples():
    assert accuracy([0.6, 0.4], [1, 0]) == 1.0
    assert accuracy([0.5], [1]) == 1.0
    assert accuracy([0.5], [0]) == 0.0


def test_auc_examples():
    assert auc([0.2, 0.8], [0, 1]) == 1.0
    assert auc([0.3, 0.3, 0.3], [0, 1, 1]) == 0.5
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75, abs=1e-12)


def test_auc_single_class():
    with pytest.raises(MetricError):
        auc([0.2, 0.4], [1, 1])


@pytest.mark.parametrize("fn", [rmse, accuracy, auc])
def test_empty_input(fn):
    with pytest.raises(MetricError):
        fn([], [])


scores = st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.7, 0.9, 1.0]), min_size=2, max_size=30)


@given(scores, st.data())
def test_auc_matches_pair_count(pred, data):
    truth = data.draw(st.lists(st.integers(0, 1), min_size=len(pred), max_size=len(pred)))
    assume(0 < sum(truth) < len(truth))
    assert auc(pred, truth) == pytest.approx(brute_auc(pred, truth), abs=1e-12)


@given(scores, st.data())
def test_auc_invariant_under_monotone_map(pred, data):
    truth = data.draw(st.lists(st.integers(0, 1), min_size=len(pred), max_size=len(pred)))
    assume(0 < sum(truth) < len(truth))
    mapped = [math.exp(3 * p) + 7 for p in pred]
    assert auc(mapped, truth) == pytest.approx(auc(pred, truth), abs=1e-12)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.data())
def test_accuracy_is_one_minus_hamming(pred, data):
    truth = data.draw(st.lists(st.integers(0, 1), min_size=len(pred), max_size=len(pred)))
    hamming = np.mean((np.array(pred) >= 0.5).astype(int) != np.array(truth))
    assert accuracy(pred, truth) == pytest.approx(1 - hamming, abs=1e-12)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.data())
def test_rmse_symmetry(pred, data):
    truth = data.draw(st.lists(st.integers(0, 1), min_size=len(pred), max_size=len(pred)))
    flipped = rmse([1 - p for p in pred], [1 - t for t in truth])
    assert flipped == pytest.approx(rmse(pred, truth), abs=1e-12)


def test_mape_examples():
    truth = ModelParams.standard(0.08, 0.3, 0.15, 0.05)
    assert all(v == 0 for v in mape(truth, truth).values())
    fit = ModelParams.standard(0.08, 0.33, 0.15, 0.05)
    assert mape(fit, truth)["learns"] == pytest.approx(10.0, abs=1e-9)
    assert "forgets" not in mape(fit, truth)


def _toy():
    seqs = [Sequence("a", [1, 1, 0, 1]), Sequence("b", [0, 0, 1]), Sequence("c", [1, 0, 1, 1, 1])]
    return Dataset({"k": seqs, "j": [Sequence("a", [1, 0]), Sequence("d", [0, 1])]})


def test_evaluate_columns():
    p = ModelParams.standard(0.3, 0.2, 0.2, 0.1)
    report = evaluate({"k": p, "j": p}, _toy(), ["auc", "rmse"])
    assert report.metrics == ["auc", "rmse"]
    assert set(report.rows["k"]) == {"auc", "rmse"}
    assert report.counts == {"k": 12, "j": 4}
    assert "auc" in report.table() and "(overall)" in report.delimited()


def test_evaluate_custom_metric():
    def seven(truth, pred):
        return 7

    p = ModelParams.standard(0.3, 0.2, 0.2, 0.1)
    report = evaluate({"k": p, "j": p}, _toy(), [seven])
    assert report.rows["k"]["seven"] == 7 and report.rows["j"]["seven"] == 7


def test_evaluate_custom_metric_argument_order():
    seen = {}

    def capture(truth, pred):
        seen["truth"] = list(truth)
        return 0.0

    p = ModelParams.standard(0.3, 0.2, 0.2, 0.1)
    evaluate({"j": p}, Dataset({"j": [Sequence("a", [1, 0])]}), [capture])
    assert seen["truth"] == [1.0, 0.0]


def test_evaluate_perfect_model():
    p = ModelParams.standard(1.0, 0.0, 0.0, 0.0)
    ds = Dataset({"k": [Sequence(str(i), [1] * 5) for i in range(4)]})
    assert evaluate({"k": p}, ds, ["accuracy"]).rows["k"]["accuracy"] == 1.0


def test_evaluate_unknown_metric():
    with pytest.raises(MetricError, match="available"):
        evaluate({"k": ModelParams.standard(0.3, 0.2, 0.2, 0.1)}, _toy(), ["f1"])


def test_evaluate_skips_masked_steps():
    p = ModelParams.standard(0.3, 0.2, 0.2, 0.1)
    ds = Dataset({"k": [Sequence("a", [1, 1, 0], mask=[False, True, True])]})
    assert evaluate({"k": p}, ds, ["rmse"]).counts["k"] == 2


def test_overall_is_pooled_and_weighted_is_average():
    p = ModelParams.standard(0.3, 0.2, 0.2, 0.1)
    report = evaluate({"k": p, "j": p}, _toy(), ["accuracy"])
    w = (12 * report.rows["k"]["accuracy"] + 4 * report.rows["j"]["accuracy"]) / 16
    assert report.weighted["accuracy"] == pytest.approx(w, abs=1e-12)
    assert report.overall["accuracy"] == pytest.approx(w, abs=1e-12)
