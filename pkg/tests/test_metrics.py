import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import binary_mcc
from trustxai.metrics import ConfusionMatrix, accuracy, format_table, mcc, summary, undetected_rate

# (tn, fp, fn, tp) -> expected (accuracy, mcc, ur) and the UR tolerance its digits allow
REFERENCE_ROWS = [
    ((885980, 12, 131, 69448), (0.9998, 0.9988, 0.0019), 1e-4),
    ((221452, 4, 40, 17397), (0.9998, 0.9986, 0.0023), 1e-4),
    ((53664, 173, 529, 46412), (0.9930, 0.9860, 0.0113), 1e-4),
    ((13452, 54, 138, 11551), (0.9924, 0.9847, 0.0118), 1e-4),
    ((15791, 657, 473, 35507), (0.9784, 0.9498, 0.013), 5e-4),
    ((3895, 177, 115, 8920), (0.9777, 0.9478, 0.0127), 1e-4),
]


@pytest.mark.parametrize("counts, expected, tol", REFERENCE_ROWS)
def test_published_summary_rows(counts, expected, tol):
    cm = ConfusionMatrix.binary(*counts)
    acc, m, ur = expected
    assert accuracy(cm) == pytest.approx(acc, abs=1e-4)
    assert mcc(cm) == pytest.approx(m, abs=1e-4)
    assert undetected_rate(cm) == pytest.approx(ur, abs=tol)


def test_binary_accessors():
    cm = ConfusionMatrix.binary(tn=10, fp=2, fn=3, tp=20)
    assert (cm.tn, cm.fp, cm.fn, cm.tp) == (10, 2, 3, 20)
    assert cm.positive == 1
    assert cm.counts.tolist() == [[20, 3], [2, 10]]


def test_positive_class_is_configurable():
    cm = ConfusionMatrix(np.array([[20, 3], [2, 10]]), positive=2)
    assert (cm.tn, cm.fp, cm.fn, cm.tp) == (20, 3, 2, 10)


def test_trivial_cases():
    assert mcc(ConfusionMatrix.binary(50, 0, 0, 50)) == 1.0
    assert mcc(ConfusionMatrix.binary(0, 7, 9, 0)) == -1.0
    assert mcc(ConfusionMatrix.binary(10, 0, 5, 0)) == 0.0
    assert accuracy(ConfusionMatrix.binary(5, 5, 5, 5)) == 0.5
    assert accuracy(ConfusionMatrix(np.diag([3, 4, 5]))) == 1.0
    assert undetected_rate(ConfusionMatrix.binary(5, 1, 0, 9)) == 0.0
    assert undetected_rate(ConfusionMatrix.binary(5, 1, 4, 0)) == 1.0
    with pytest.raises(ValueError):
        undetected_rate(ConfusionMatrix.binary(5, 1, 0, 0))
    with pytest.raises(ValueError):
        mcc(ConfusionMatrix(np.zeros((2, 2), int)))


def test_from_labels():
    cm = ConfusionMatrix.from_labels([1, 1, 2, 2, 2], [1, 2, 2, 2, 1])
    assert cm.counts.tolist() == [[1, 1], [1, 2]]


def test_multiclass_mcc_reduces_to_binary(rng):
    for _ in range(20):
        c = rng.integers(0, 200, size=(2, 2))
        cm = ConfusionMatrix(c)
        assert mcc(cm) == pytest.approx(binary_mcc(c[1, 1], c[1, 0], c[0, 1], c[0, 0]), abs=1e-12)


def test_multiclass_mcc_perfect_and_bounded(rng):
    assert mcc(ConfusionMatrix(np.diag([4, 5, 6]))) == pytest.approx(1.0)
    for _ in range(20):
        v = mcc(ConfusionMatrix(rng.integers(0, 50, size=(4, 4))))
        assert -1.0 <= v <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
def test_mcc_relabeling_symmetry(tn, fp, fn, tp):
    if tn + fp + fn + tp == 0:
        return
    a = mcc(ConfusionMatrix.binary(tn, fp, fn, tp))
    b = mcc(ConfusionMatrix.binary(tp, fn, fp, tn))
    assert a == pytest.approx(b, abs=1e-12)
    assert a == pytest.approx(binary_mcc(tn, fp, fn, tp), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 100), min_size=9, max_size=9), st.permutations([0, 1, 2]))
def test_accuracy_under_label_permutation(cells, perm):
    c = np.array(cells).reshape(3, 3)
    if c.sum() == 0:
        return
    p = c[np.ix_(perm, perm)]
    assert accuracy(ConfusionMatrix(p)) == pytest.approx(np.trace(p) / p.sum())


def test_summary_and_table():
    s = summary(ConfusionMatrix.binary(90, 10, 5, 95))
    assert set(s) >= {"n", "mcc", "accuracy", "undetected_rate", "confusion"}
    text = format_table({"test": s})
    assert "MCC" in text and "test" in text
