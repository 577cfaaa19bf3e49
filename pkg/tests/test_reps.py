import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_mi
from trustxai.famd import FactorScores
from trustxai.reps import (bin_values, entropy, joint_table, mutual_information, normalize_weights,
                           pick_representatives, rank_factors)


def test_entropy_examples():
    assert entropy([1, 2] * 50) == pytest.approx(1.0)
    assert entropy([2] * 9) == 0.0
    assert entropy([1] + [2] * 3) == pytest.approx(0.811278, abs=1e-6)
    with pytest.raises(ValueError):
        entropy([])


def test_binning_contract(rng):
    x = rng.normal(size=1000)
    b = bin_values(x, 16)
    assert np.all(np.diff(b.edges) > 0)
    assert b.counts.sum() == 1000 and b.assignments.max() < 16
    assert b.assignments[np.argmax(x)] == 15 and b.assignments[np.argmin(x)] == 0
    c = bin_values(np.full(5, 3.0), 8)
    assert np.all(np.diff(c.edges) > 0) and c.counts.sum() == 5
    with pytest.raises(ValueError):
        bin_values(x, 1)


def test_mi_examples(rng):
    y = rng.integers(1, 3, size=1000)
    assert mutual_information(y, y.astype(float)) == pytest.approx(entropy(y))
    assert mutual_information(y, np.zeros(1000)) == 0.0
    y = rng.integers(1, 3, size=10000)
    assert mutual_information(y, rng.normal(size=10000)) < 0.01


def test_mi_matches_brute_force(rng):
    for _ in range(10):
        n = int(rng.integers(20, 200))
        y = rng.integers(1, 4, size=n)
        f = rng.normal(size=n) + y
        assert abs(mutual_information(y, f, 8) - brute_force_mi(y, f, 8)) < 1e-12


def _h(counts):
    p = counts[counts > 0] / counts.sum()
    return -np.sum(p * np.log2(p))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 3), st.integers(-5, 5)), min_size=2, max_size=200),
       st.integers(2, 16))
def test_mi_equals_entropy_identity(pairs, bins):
    y = np.array([p[0] for p in pairs])
    f = np.array([p[1] for p in pairs], dtype=float)
    mi = mutual_information(y, f, bins)
    table = joint_table(y, bin_values(f, bins).assignments, bins)
    ident = _h(table.sum(1)) + _h(table.sum(0)) - _h(table.ravel())
    assert abs(mi - max(ident, 0.0)) < 1e-12
    assert 0.0 <= mi <= entropy(y) + 1e-12


def test_factor_equal_to_label_wins(rng):
    n = 2000
    y = np.repeat([1, 2], n // 2)
    cols = rng.normal(size=(n, 6))
    cols[:, 3] = y + 0.01 * rng.normal(size=n)
    reps = pick_representatives([cols[: n // 2], cols[n // 2:]], y, 2)
    assert reps.indices[0] == 3


def test_k_equals_K_gives_full_ranking(rng):
    y = np.repeat([1, 2], 100)
    cols = rng.normal(size=(200, 4)) + np.outer(y, [0.0, 1.0, 2.0, 0.5])
    reps = pick_representatives([FactorScores(cols[:100], 1), FactorScores(cols[100:], 2)], y, 4)
    assert reps.indices.tolist() == [i for i, _ in rank_factors(cols, y)]
    assert reps.normalized_weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(reps.raw_weights) <= 0)


def test_k_out_of_range(rng):
    y = np.repeat([1, 2], 10)
    cols = rng.normal(size=(20, 3))
    with pytest.raises(ValueError):
        pick_representatives([cols[:10], cols[10:]], y, 4)
    with pytest.raises(ValueError):
        pick_representatives([cols[:10], cols[10:]], y, 0)


def test_ties_break_on_lower_index():
    y = np.repeat([1, 2], 50)
    col = y.astype(float)
    cols = np.c_[np.zeros(100), col, col, np.zeros(100)]
    reps = pick_representatives([cols[:50], cols[50:]], y, 4)
    assert reps.indices.tolist() == [1, 2, 0, 3]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=12), st.floats(0.01, 100))
def test_weight_normalization(w, scale):
    w = np.array(w)
    nw = normalize_weights(w)
    assert abs(nw.sum() - 1.0) < 1e-12
    if w.sum() > 0:
        assert np.allclose(normalize_weights(w * scale), nw, atol=1e-12)
        assert np.array_equal(np.argsort(-w, kind="stable"), np.argsort(-(w * scale), kind="stable"))


def test_selection_is_deterministic(rng):
    y = np.repeat([1, 2], 300)
    cols = rng.normal(size=(600, 5)) + np.outer(y, [0, 1, 0, 2, 0])
    a = pick_representatives([cols[:300], cols[300:]], y, 3)
    b = pick_representatives([cols[:300], cols[300:]], y, 3)
    assert np.array_equal(a.indices, b.indices) and np.array_equal(a.raw_weights, b.raw_weights)
