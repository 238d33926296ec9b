"""Set-overlap metrics against brute-force oracles."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ppsl.metrics import fscore, score_pair

node_sets = st.sets(st.integers(0, 29), max_size=12)


def brute_force(pred, truth):
    hit = len(pred & truth)
    p = hit / len(pred) if pred else 0.0
    r = hit / len(truth)
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    j = hit / len(pred | truth)
    return p, r, f, j


class TestScorePair:
    def test_worked_example(self):
        s = score_pair({1, 2, 3}, {2, 3, 4})
        assert s.precision == pytest.approx(2 / 3)
        assert s.recall == pytest.approx(2 / 3)
        assert s.fscore == pytest.approx(2 / 3)
        assert s.jaccard == pytest.approx(0.5)

    def test_identity(self):
        s = score_pair({4, 7}, {4, 7})
        assert (s.precision, s.recall, s.fscore, s.jaccard) == (1.0, 1.0, 1.0, 1.0)

    def test_disjoint(self):
        s = score_pair({1}, {2})
        assert (s.precision, s.recall, s.fscore, s.jaccard) == (0.0, 0.0, 0.0, 0.0)

    def test_empty_pred(self):
        s = score_pair(set(), {1, 2})
        assert (s.precision, s.recall, s.fscore, s.jaccard) == (0.0, 0.0, 0.0, 0.0)

    def test_empty_truth_rejected(self):
        with pytest.raises(ValueError):
            score_pair({1}, set())

    @given(node_sets, node_sets.filter(bool))
    def test_matches_brute_force(self, pred, truth):
        s = score_pair(pred, truth)
        p, r, f, j = brute_force(pred, truth)
        assert s.precision == pytest.approx(p, abs=1e-15)
        assert s.recall == pytest.approx(r, abs=1e-15)
        assert s.fscore == pytest.approx(f, abs=1e-15)
        assert s.jaccard == pytest.approx(j, abs=1e-15)

    @given(node_sets, node_sets.filter(bool))
    def test_f_from_jaccard_identity(self, pred, truth):
        s = score_pair(pred, truth)
        assert abs(s.fscore - 2 * s.jaccard / (1 + s.jaccard)) <= 1e-12

    def test_fscore_helper(self):
        assert fscore({1, 2}, {2, 3}) == pytest.approx(0.5)
