"""Metric oracles: reference DP, definitional formulas, metric axioms."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diaphon.metrics import EvalRecord, evaluate, levenshtein, per, wer

from oracles import reference_edit_distance

segments = st.sampled_from(["a", "b", "c", "d", "ˈ"])
seqs = st.lists(segments, min_size=0, max_size=9).map(tuple)


class TestLevenshtein:
    def test_identity(self):
        assert levenshtein(("a", "b", "c"), ("a", "b", "c")) == 0

    def test_city_pair(self):
        # delete one segment, substitute another
        assert levenshtein("g o r o d".split(), "g r a d".split()) == 2

    def test_insertions_only(self):
        assert levenshtein((), ("a", "b")) == 2

    def test_symmetric(self):
        a, b = ("x", "y", "z"), ("y", "z", "w", "v")
        assert levenshtein(a, b) == levenshtein(b, a)

    def test_matches_reference_on_random_pairs(self):
        rng = np.random.default_rng(77)
        syms = ["p", "t", "k", "a", "i", "u", "ˈ"]
        for _ in range(1000):
            a = tuple(rng.choice(syms, size=rng.integers(0, 8)))
            b = tuple(rng.choice(syms, size=rng.integers(0, 8)))
            assert levenshtein(a, b) == reference_edit_distance(a, b)

    @settings(max_examples=200, deadline=None)
    @given(seqs, seqs, seqs)
    def test_metric_axioms(self, a, b, c):
        assert levenshtein(a, b) >= 0
        assert (levenshtein(a, b) == 0) == (a == b)
        assert levenshtein(a, b) == levenshtein(b, a)
        assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


class TestPer:
    def test_single_substitution(self):
        assert per("m l a k o".split(), "m l E k o".split()) == pytest.approx(0.2)

    def test_identical(self):
        assert per(("a", "b"), ("a", "b")) == 0.0

    def test_disjoint_equal_length(self):
        assert per(("a", "b", "c"), ("x", "y", "z")) == 1.0

    def test_both_empty_rejected(self):
        with pytest.raises(ValueError):
            per((), ())

    @settings(max_examples=200, deadline=None)
    @given(seqs, seqs)
    def test_range_and_zero_iff_equal(self, a, b):
        if not a and not b:
            return
        v = per(a, b)
        assert 0.0 <= v <= 1.0
        assert (v == 0.0) == (a == b)


def rec(lang, gold, pred):
    return EvalRecord(lang, tuple(gold), tuple(gold), tuple(pred))


class TestWer:
    def test_counting(self):
        records = [rec("l", ("a",), ("a",))] * 7 + [rec("l", ("a",), ("b",))] * 3
        assert wer(records) == pytest.approx(0.3)

    def test_all_correct(self):
        assert wer([rec("l", ("a", "b"), ("a", "b"))] * 4) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            evaluate([])

    def test_pooled_equals_weighted_language_mean(self):
        rng = np.random.default_rng(5)
        records = []
        for lang, n in [("x", 11), ("y", 5), ("z", 23)]:
            for _ in range(n):
                gold = tuple(rng.choice(["a", "b"], size=3))
                pred = gold if rng.random() < 0.5 else gold[:-1] + ("q",)
                records.append(EvalRecord(lang, gold, gold, pred))
        pooled, by_lang = evaluate(records)
        weighted = sum(r.wer * r.n for r in by_lang.values()) / sum(r.n for r in by_lang.values())
        assert pooled.wer == pytest.approx(weighted)
        weighted_per = sum(r.per * r.n for r in by_lang.values()) / sum(r.n for r in by_lang.values())
        assert pooled.per == pytest.approx(weighted_per)

    def test_suprasegmentals_count_as_segments(self):
        r = rec("l", ("ˈ", "a"), ("a",))
        assert not r.correct
        assert per(r.gold, r.predicted) == pytest.approx(0.5)
