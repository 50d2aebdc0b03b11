import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netpls.errors import InvalidArgumentError
from netpls.metrics import adjusted_rand_index, mse, normalized_mutual_information


def pair_counting_ari(a, b):
    """ARI from the 2x2 table of node pairs (same/different in a and in b)."""
    n11 = n10 = n01 = n00 = 0
    for i, j in itertools.combinations(range(len(a)), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        n11 += sa and sb
        n10 += sa and not sb
        n01 += sb and not sa
        n00 += not sa and not sb
    den = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00)
    return 1.0 if den == 0 else 2.0 * (n11 * n00 - n10 * n01) / den


def loop_nmi(a, b):
    n = len(a)
    pa = {x: a.count(x) / n for x in set(a)}
    pb = {y: b.count(y) / n for y in set(b)}
    mi = 0.0
    for x in pa:
        for y in pb:
            pxy = sum(1 for u, v in zip(a, b) if u == x and v == y) / n
            if pxy > 0:
                mi += pxy * np.log(pxy / (pa[x] * pb[y]))
    ha = -sum(p * np.log(p) for p in pa.values())
    hb = -sum(p * np.log(p) for p in pb.values())
    return mi / np.sqrt(ha * hb)


labels = st.lists(st.integers(0, 3), min_size=2, max_size=30)


class TestARI:
    def test_identical(self):
        assert adjusted_rand_index([0, 0, 1, 1], [5, 5, 2, 2]) == 1.0

    def test_known_value(self):
        # Hand-checked with the pair-counting formula.
        assert adjusted_rand_index([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)

    def test_matches_pair_counting(self, rng):
        for _ in range(50):
            n = rng.integers(2, 25)
            a, b = rng.integers(0, 3, n), rng.integers(0, 4, n)
            assert adjusted_rand_index(a, b) == pytest.approx(pair_counting_ari(a, b), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(labels, st.permutations(range(4)), st.data())
    def test_label_permutation_invariant(self, a, perm, data):
        b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
        relabeled = [perm[x] for x in b]
        assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_index(a, relabeled), abs=1e-12)
        assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_index(b, a), abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            adjusted_rand_index([0, 1], [0, 1, 1])


class TestNMI:
    def test_matches_loops(self, rng):
        for _ in range(30):
            n = rng.integers(4, 30)
            a = list(rng.integers(0, 3, n))
            b = list(rng.integers(0, 3, n))
            if len(set(a)) < 2 or len(set(b)) < 2:
                continue
            assert normalized_mutual_information(a, b) == pytest.approx(loop_nmi(a, b), abs=1e-12)

    def test_degenerate_partitions(self):
        assert normalized_mutual_information([0, 0, 0], [1, 1, 1]) == 1.0
        assert normalized_mutual_information([0, 0, 0], [0, 1, 1]) == 0.0

    def test_arithmetic_bounded_by_geometric(self):
        a, b = [0, 0, 1, 1, 2, 2], [0, 0, 1, 1, 1, 1]
        ar = normalized_mutual_information(a, b, "arithmetic")
        ge = normalized_mutual_information(a, b, "geometric")
        assert 0 < ar <= ge <= 1

    def test_unknown_average(self):
        with pytest.raises(InvalidArgumentError):
            normalized_mutual_information([0, 1], [0, 1], "max")

    @settings(max_examples=200, deadline=None)
    @given(labels, st.permutations(range(4)))
    def test_permutation_invariant_and_bounded(self, a, perm):
        b = [perm[x] for x in a]
        v = normalized_mutual_information(a, b)
        assert v == pytest.approx(normalized_mutual_information(a, a), abs=1e-12)
        assert 0.0 <= v <= 1.0


class TestMSE:
    def test_per_coordinate(self):
        est = [[1.0, 2.0], [3.0, 2.0]]
        np.testing.assert_allclose(mse(est, [2.0, 1.0]), [1.0, 1.0])

    def test_errors(self):
        with pytest.raises(InvalidArgumentError):
            mse([[1.0, 2.0]], [1.0])
        with pytest.raises(InvalidArgumentError):
            mse(np.zeros((0, 2)), [1.0, 2.0])


def set_partitions(n):
    """All partitions of range(n) as restricted growth strings."""
    if n == 0:
        yield []
        return
    for p in set_partitions(n - 1):
        for k in range(max(p, default=-1) + 2):
            yield p + [k]


class TestSpecExamples:
    def test_exhaustive_small_partitions(self):
        for n in range(2, 7):
            parts = list(set_partitions(n))
            for a in parts[::3]:
                for b in parts[::5]:
                    assert adjusted_rand_index(a, b) == pytest.approx(pair_counting_ari(a, b), abs=1e-12)

    def test_self_agreement(self):
        a = [0, 1, 1, 2, 2, 2]
        assert adjusted_rand_index(a, a) == 1.0
        assert normalized_mutual_information(a, a) == pytest.approx(1.0)

    def test_independent_labels(self, rng):
        a, b = rng.integers(0, 4, 10_000), rng.integers(0, 4, 10_000)
        assert normalized_mutual_information(a, b) < 0.01

    def test_mse_examples(self):
        np.testing.assert_array_equal(mse([[0.4], [0.4]], [0.4]), [0.0])
        np.testing.assert_allclose(mse([[0.4 - 0.01], [0.4 + 0.01]], [0.4]), [1e-4])
