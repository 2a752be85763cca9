import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aeface import verify
from aeface.dataio import Pair, PairList
from aeface.errors import DataError, NumericError, ProtocolError
from aeface.verify import EvalReport


def test_cosine_basics(rng):
    v = rng.normal(size=7)
    assert verify.cosine_score(v, v) == pytest.approx(1.0, abs=1e-15)
    assert verify.cosine_score([1, 0], [0, 1]) == 0.0
    assert verify.cosine_score([1, 0], [1, 1]) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert verify.cosine_score([1, 0], [1, 1]) == pytest.approx(0.70710678, abs=1e-8)


def test_cosine_clamped():
    v = np.array([0.1, 0.2, 0.3])
    s = verify.cosine_score(v, 3 * v)
    assert -1.0 <= s <= 1.0


def test_cosine_zero_vector():
    with pytest.raises(NumericError):
        verify.cosine_score([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(DataError):
        verify.cosine_score([1.0], [1.0, 0.0])


def test_score_pairs_hand_oracle():
    emb = {"a": np.array([1.0, 0.0]), "b": np.array([0.0, 2.0]),
           "c": np.array([3.0, 4.0]), "d": np.array([-1.0, -1.0])}
    pairs = PairList([Pair("a", "b", False), Pair("a", "c", True), Pair("c", "d", False), Pair("c", "c", True)])
    expected = [0.0, 3 / 5, -7 / (5 * math.sqrt(2)), 1.0]
    np.testing.assert_allclose(verify.score_pairs(emb, pairs), expected, rtol=0, atol=1e-12)


def test_score_pairs_missing_id():
    with pytest.raises(DataError, match="zed"):
        verify.score_pairs({"a": np.ones(2)}, PairList([Pair("a", "zed", True)]))


def test_threshold_two_points():
    t, acc = verify.choose_threshold([0.9, 0.1], [True, False])
    assert t == 0.5 and acc == 1.0


def test_threshold_all_same():
    t, acc = verify.choose_threshold([0.3, 0.7, 0.5], [True] * 3)
    assert t < 0.3 and t == pytest.approx(0.3, abs=1e-8)
    assert acc == 1.0


def brute_force(scores, same):
    """Smallest threshold among every distinct cut that maximises accuracy."""
    u = sorted(set(scores))
    cuts = [u[0] - 1.0] + [(a + b) / 2 for a, b in zip(u, u[1:])] + [u[-1] + 1.0]
    best = None
    for i, t in enumerate(cuts):
        acc = sum((s >= t) == f for s, f in zip(scores, same)) / len(scores)
        if best is None or acc > best[1]:
            best = (i, acc)
    return best


def test_interleaved_brute_force():
    scores, same = [0.1, 0.2, 0.3, 0.4], [False, True, False, True]
    t, acc = verify.choose_threshold(scores, same)
    assert acc == 0.75 == brute_force(scores, same)[1]
    assert t == pytest.approx(0.15)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 20), st.booleans()), min_size=1, max_size=60))
def test_choose_threshold_matches_exhaustive_search(data):
    scores = [s / 20 for s, _ in data]
    same = [f for _, f in data]
    t, acc = verify.choose_threshold(scores, same)
    idx, best = brute_force(scores, same)
    assert acc == pytest.approx(best, abs=1e-15)
    assert verify.accuracy_at(scores, same, t) == pytest.approx(acc, abs=1e-15)
    # same cut position: identical partition of the scores
    u = sorted(set(scores))
    below = sum(1 for v in u if v < t)
    assert below == idx


def test_kfold_separable():
    scores = np.r_[np.linspace(0.6, 0.9, 10), np.linspace(-0.5, 0.4, 10)]
    same = np.r_[np.ones(10, bool), np.zeros(10, bool)]
    rep = verify.kfold_accuracy(scores, same, np.tile(np.arange(5), 4), 5)
    assert rep.mean_accuracy == 1.0 and rep.std_accuracy == 0.0


def test_kfold_random_scores_near_chance():
    rng = np.random.default_rng(5)
    same = np.r_[np.ones(1000, bool), np.zeros(1000, bool)]
    folds = np.r_[np.arange(1000) % 10, np.arange(1000) % 10]
    rep = verify.kfold_accuracy(rng.uniform(-1, 1, 2000), same, folds, 10)
    assert 0.45 <= rep.mean_accuracy <= 0.55


def test_kfold_two_fold_hand_example():
    scores = [0.9, 0.8, 0.3, 0.2, 0.7, 0.6, 0.4, 0.1]
    same = [1, 1, 0, 0, 1, 0, 1, 0]
    rep = verify.kfold_accuracy(scores, same, [0, 0, 0, 0, 1, 1, 1, 1], 2)
    assert [f.threshold for f in rep.folds] == pytest.approx([0.25, 0.55])
    assert [f.accuracy for f in rep.folds] == [0.75, 0.5]
    assert rep.mean_accuracy == 0.625 and rep.std_accuracy == 0.125
    assert rep.meta == {"k": 2, "n_pairs": 8, "n_same": 4, "n_diff": 4}


def test_kfold_empty_fold_and_bad_index():
    with pytest.raises(ProtocolError, match="fold 1"):
        verify.kfold_accuracy([0.1, 0.2], [True, False], [0, 0], 2)
    with pytest.raises(ProtocolError):
        verify.kfold_accuracy([0.1, 0.2], [True, False], [0, 2], 2)


def test_kfold_single_fold_tunes_on_itself():
    rep = verify.kfold_accuracy([0.9, 0.1], [True, False], [0, 0], 1)
    assert rep.mean_accuracy == 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(1, 8), st.integers(0, 10**6))
def test_kfold_report_consistency(k, per, seed):
    rng = np.random.default_rng(seed)
    n = 2 * k * per
    same = np.arange(n) % 2 == 0
    scores = rng.normal(size=n) + same
    rep = verify.kfold_accuracy(scores, same, np.arange(n) % k, k)
    accs = [f.accuracy for f in rep.folds]
    assert abs(rep.mean_accuracy - np.mean(accs)) <= 1e-12
    assert abs(rep.std_accuracy - np.std(accs)) <= 1e-12
    # each entry tested once: fold sizes add up to n
    assert sum(a * (n // k) for a in accs) == pytest.approx(rep.mean_accuracy * n)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 10**6))
def test_scale_invariance(c, seed):
    rng = np.random.default_rng(seed)
    emb = {str(i): rng.normal(size=4) for i in range(12)}
    pairs = PairList([Pair(str(i), str((i * 5 + 1) % 12), i % 2 == 0) for i in range(12)])
    s1 = verify.score_pairs(emb, pairs)
    s2 = verify.score_pairs({k: c * v for k, v in emb.items()}, pairs)
    np.testing.assert_allclose(s1, s2, rtol=0, atol=1e-12)
    folds = np.arange(12) % 3
    r1 = verify.kfold_accuracy(s1, pairs.same_flags, folds, 3)
    r2 = verify.kfold_accuracy(s2, pairs.same_flags, folds, 3)
    assert abs(r1.mean_accuracy - r2.mean_accuracy) <= 1e-12


def test_report_json_key_order():
    rep = verify.kfold_accuracy([0.9, 0.1, 0.8, 0.2], [1, 0, 1, 0], [0, 0, 1, 1], 2, meta={"seed": 3})
    d = json.loads(rep.to_json())
    assert list(d) == ["folds", "mean_accuracy", "std_accuracy", "meta"]
    assert list(d["folds"][0]) == ["fold", "threshold", "accuracy"]
    assert d["meta"]["seed"] == 3
    assert EvalReport.from_dict(d) == rep
