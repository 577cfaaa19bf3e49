import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import pca_scores, same_up_to_sign
from trustxai.data import Column, Dataset, FeatureKind, Schema
from trustxai.famd import (CHI_SQ, CORR_RATIO_SQ, PEARSON_SQ, DegenerateDataError, association,
                           cramer_v_sq, fit_famd, project, project_batch, reference_frame, relation_matrix)

Q, L = FeatureKind.QUANTITATIVE, FeatureKind.QUALITATIVE


def quant(x):
    x = np.asarray(x, dtype=float)
    schema = Schema.quantitative([f"x{j}" for j in range(x.shape[1])])
    return Dataset.from_columns(schema, list(x.T))


def mixed(n, rng):
    schema = Schema((Column("a", Q), Column("b", Q), Column("p", L), Column("s", L)))
    a = rng.normal(size=n)
    b = 0.5 * a + rng.normal(size=n)
    p = np.where(a > 0, "tcp", np.where(rng.random(n) < 0.5, "udp", "icmp"))
    s = rng.choice(["x", "y"], size=n)
    return Dataset.from_columns(schema, [a, b, p, s])


def test_association_examples(rng):
    x = rng.normal(size=50)
    assert association(x, Q, x, Q) == pytest.approx(1.0)
    assert association([1, 2, 3, 4], Q, [2, 4, 6, 8], Q) == pytest.approx(1.0)
    a = rng.choice(list("abc"), size=10000)
    b = rng.choice(list("uvwxyz"), size=10000)
    assert association(a, L, b, L) < 0.01


def test_association_symmetric_and_bounded(rng):
    x = rng.normal(size=200)
    cat = np.where(x > 0.3, "hi", "lo")
    v1 = association(x, Q, cat, L)
    v2 = association(cat, L, x, Q)
    assert v1 == pytest.approx(v2) and 0 < v1 <= 1
    assert association(np.ones(10), Q, np.arange(10.0), Q) == 0.0


def test_cramer_v_matches_brute_force(rng):
    a = rng.integers(0, 3, size=500)
    b = (a + rng.integers(0, 2, size=500)) % 4
    table = np.zeros((3, 4))
    for i, j in zip(a, b):
        table[i, j] += 1
    exp = table.sum(1, keepdims=True) * table.sum(0, keepdims=True) / table.sum()
    chi2 = np.sum((table - exp) ** 2 / exp)
    assert cramer_v_sq(a.astype(str), b.astype(str)) == pytest.approx(chi2 / (500 * 2), rel=1e-12)


def test_relation_matrix_structure(rng):
    d = mixed(300, rng)
    rm = relation_matrix(d)
    assert np.allclose(rm.values, rm.values.T)
    assert np.all(rm.values >= 0)
    assert np.allclose(np.diag(rm.values), 1.0)
    assert rm.kinds[0][1] == PEARSON_SQ and rm.kinds[2][3] == CHI_SQ and rm.kinds[0][2] == CORR_RATIO_SQ


@pytest.mark.parametrize("seed", range(5))
def test_quantitative_famd_equals_pca(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(100, 5)) @ rng.normal(size=(5, 5))
    model, scores = fit_famd(quant(x))
    oracle, vals = pca_scores(x)
    assert same_up_to_sign(scores.values, oracle, 1e-6)
    assert np.allclose(model.eigenvalues, vals, atol=1e-9)


def test_rank_one_structure():
    x = np.arange(20.0)
    model, _ = fit_famd(quant(np.c_[x, 3 * x - 1]))
    assert model.explained_ratio()[0] == pytest.approx(1.0)
    assert abs(model.eigenvalues[1]) < 1e-9


def test_constant_dataset_is_degenerate():
    with pytest.raises(DegenerateDataError):
        fit_famd(quant(np.ones((5, 2))))
    with pytest.raises(DegenerateDataError):
        fit_famd(quant(np.ones((1, 2))))


def test_constant_column_is_harmless(rng):
    x = np.c_[rng.normal(size=40), np.full(40, 7.0), rng.normal(size=40)]
    model, scores = fit_famd(quant(x))
    assert not model.live[1]
    assert np.all(np.isfinite(scores.values))
    assert model.relation.values[1].sum() == 0.0


def test_model_invariants(rng):
    model, _ = fit_famd(mixed(400, rng))
    lt = model.loadings.T @ model.loadings
    assert np.max(np.abs(lt - np.eye(4))) < 1e-8
    assert np.all(np.diff(model.eigenvalues) <= 1e-12)
    assert model.eigenvalues.sum() == pytest.approx(np.trace(model.relation.values), abs=1e-6)
    idx = np.argmax(np.abs(model.loadings), axis=0)
    assert np.all(model.loadings[idx, np.arange(4)] > 0)


def test_projection_reproduces_training_scores(rng):
    d = mixed(200, rng)
    model, scores = fit_famd(d)
    batch, flags = project_batch(model, d)
    assert np.max(np.abs(batch - scores.values)) < 1e-9
    assert not flags.any()
    one, flag = project(model, d.row(17))
    assert np.max(np.abs(one - scores.values[17])) < 1e-9 and not flag


def test_class_mean_projects_to_zero_standardized(rng):
    x = rng.normal(3.0, 2.0, size=(60, 4))
    pooled = quant(np.r_[x, x + 5.0])
    model, _ = fit_famd(quant(x), frame=reference_frame(pooled))
    std_scores, _ = project(model, list(x.mean(0)), standardized=True)
    assert np.max(np.abs(std_scores)) < 1e-9
    # the unstandardized scores keep the class location relative to the pooled frame
    shifted, _ = project(model, list(x.mean(0)))
    assert np.linalg.norm(shifted) > 1.0


def test_frame_keeps_class_locations_apart(rng):
    a = rng.normal(0.0, 1.0, size=(300, 3))
    b = rng.normal(6.0, 1.0, size=(300, 3))
    frame = reference_frame(quant(np.r_[a, b]))
    ma, sa = fit_famd(quant(a), 1, frame)
    mb, sb = fit_famd(quant(b), 2, frame)
    # own-class scores sit at the class location, not at zero
    assert np.linalg.norm(sa.values.mean(0) - sb.values.mean(0)) > 5.0
    # class-b rows seen through class a's model land far from class a's scores
    pb, _ = project_batch(ma, quant(b))
    assert np.linalg.norm(pb.mean(0) - sa.values.mean(0)) > 5.0
    # without the shift, each class is centred on its own mean
    own, _ = project_batch(ma, quant(a), standardized=True)
    assert np.max(np.abs(own.mean(0))) < 1e-9


def test_unseen_category_is_flagged(rng, caplog):
    d = mixed(200, rng)
    model, _ = fit_famd(d)
    row = d.row(0)
    row[2] = "sctp"
    scores, flag = project(model, row)
    assert flag and np.all(np.isfinite(scores))
    ref = d.row(0)
    base, _ = project(model, ref)
    assert not np.allclose(scores, base)


def test_batch_projection_shape(rng):
    d = mixed(500, rng)
    model, _ = fit_famd(d.take(np.arange(300)))
    out, flags = project_batch(model, d.take(np.arange(300, 500)), factors=[0, 2])
    assert out.shape == (200, 2) and flags.shape == (200,)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (30, 3), elements=st.floats(-50, 50)),
       arrays(np.float64, 3, elements=st.floats(-50, 50)),
       arrays(np.float64, 3, elements=st.floats(-50, 50)),
       st.floats(-2, 2))
def test_projection_is_affine(x, p, q, a):
    x = x + np.arange(30)[:, None] * np.array([1.0, -0.5, 0.25])   # keep columns non-constant
    model, _ = fit_famd(quant(x))
    mix, _ = project(model, list(a * p + (1 - a) * q))
    sp, _ = project(model, list(p))
    sq, _ = project(model, list(q))
    scale = 1 + np.max(np.abs(np.r_[sp, sq]))
    assert np.max(np.abs(mix - (a * sp + (1 - a) * sq))) < 1e-9 * scale
