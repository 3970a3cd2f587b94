import numpy as np
import pytest

import oracles
from knowtrace.data import Sequence
from knowtrace.em import forward
from knowtrace.inference import (PredictionTrace, classify_mastery, expected_mastery, predict, predict_many,
                                 propagate_mastery)
from knowtrace.params import ModelParams

ALGEBRA = ModelParams.standard(prior=0.08, learn=0.3, guess=0.15, slip=0.05)


def test_noiseless_emission():
    tr = predict(ModelParams.standard(0.5, 0.2, 0.0, 0.0), Sequence("u", [1]))
    assert tr.predicted_correct[0] == 0.5
    assert tr.mastery[0] == 1.0


def test_hand_example():
    tr = predict(ALGEBRA, Sequence("u", [1, 1]))
    filtered = 0.076 / 0.214
    assert tr.mastery[0] == pytest.approx(filtered, abs=1e-15)
    assert tr.mastery[0] == pytest.approx(0.35514, abs=1e-5)
    assert tr.prior_mastery[1] == pytest.approx(filtered + (1 - filtered) * 0.3, abs=1e-15)
    assert tr.prior_mastery[1] == pytest.approx(0.54860, abs=1e-5)


def test_forgetting_in_next_prior():
    p = ModelParams.standard(0.6, 0.2, 0.1, 0.1, forget=0.25)
    tr = predict(p, Sequence("u", [0, 1]))
    f = tr.mastery[0]
    assert tr.prior_mastery[1] == pytest.approx(f * 0.75 + (1 - f) * 0.2, abs=1e-15)


@pytest.mark.parametrize("seed", range(30))
def test_predicted_correct_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    p, seq = oracles.random_instance(rng, masked=seed % 4 == 0)
    np.testing.assert_allclose(predict(p, seq).predicted_correct, oracles.predicted_correct(p, seq), atol=1e-10)


def test_predicted_correct_agrees_with_forward_constants():
    rng = np.random.default_rng(3)
    for _ in range(50):
        p, seq = oracles.random_instance(rng, max_len=40)
        tr = predict(p, seq)
        c = forward(p, seq).c
        expected = np.where(seq.obs == 1, tr.predicted_correct, 1.0 - tr.predicted_correct)
        np.testing.assert_allclose(c, expected, atol=1e-12)
        np.testing.assert_allclose(tr.mastery, forward(p, seq).alpha[:, 1], atol=1e-12)


def test_trace_entries_are_probabilities():
    rng = np.random.default_rng(4)
    for _ in range(20):
        p, seq = oracles.random_instance(rng, max_len=50)
        tr = predict(p, seq)
        for arr in (tr.predicted_correct, tr.mastery, tr.prior_mastery):
            assert len(arr) == len(seq)
            assert np.all((arr >= 0) & (arr <= 1))


def test_masked_step_carries_no_evidence():
    seq = Sequence("u", [1, 1], mask=[False, True])
    tr = predict(ALGEBRA, seq)
    assert tr.mastery[0] == tr.prior_mastery[0] == 0.08


def test_all_correct_mastery_non_decreasing():
    rng = np.random.default_rng(6)
    for _ in range(50):
        p = ModelParams.standard(rng.random(), rng.random(), rng.uniform(0, 0.5), rng.uniform(0, 0.5))
        tr = predict(p, Sequence("u", np.ones(60, int)))
        assert np.all(np.diff(tr.mastery) >= -1e-12)


def test_mastery_converges_to_one_without_forgetting():
    for learn in (0.05, 0.3, 0.9):
        assert propagate_mastery(0.0, learn, 500) > 1 - 1e-6
    assert propagate_mastery(0.2, 0.1, 40) == pytest.approx(expected_mastery(0.2, 0.1, 40), abs=1e-12)


def test_predict_many_matches_single():
    rng = np.random.default_rng(8)
    p, _ = oracles.random_instance(rng, m=2, n=2)
    seqs = [oracles.random_instance(np.random.default_rng(k), m=2, n=2)[1] for k in range(10)]
    for seq, tr in zip(seqs, predict_many(p, seqs)):
        np.testing.assert_array_equal(tr.mastery, predict(p, seq).mastery)


def test_classify_examples():
    flags, first = classify_mastery([0.2, 0.96])
    assert flags.tolist() == [False, True] and first == 1
    assert classify_mastery([0.1, 0.5])[1] is None
    flags, first = classify_mastery([0.1, 0.5], threshold=0)
    assert flags.all() and first == 0


def test_classify_accepts_trace():
    tr = PredictionTrace(np.zeros(2), np.array([0.95, 0.2]), np.zeros(2), np.ones(2, bool))
    assert classify_mastery(tr)[1] == 0
