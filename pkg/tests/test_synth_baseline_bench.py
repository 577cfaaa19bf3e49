import numpy as np
import pytest

from trustxai.baseline import baseline_local_surrogate
from trustxai.bench import TimingRecord, explain_scaling, linear_fit_r2, mode_search_cost
from trustxai.data import write_csv
from trustxai.explainer import build_core
from trustxai.modesearch import SearchZone
from trustxai.reps import entropy
from trustxai.synth import SpecError, generate_synthetic, separable_spec, two_gaussians_spec


def test_minimal_spec():
    spec = {"columns": [{"name": "x", "mixtures": [[[1.0, 0.0, 1.0]], [[1.0, 5.0, 1.0]]]}]}
    ld = generate_synthetic(spec, seed=0, n=4)
    assert len(ld) == 4 and sorted(ld.labels.tolist()) == [1, 1, 2, 2]


def test_seed_gives_identical_bytes(tmp_path):
    a = generate_synthetic(separable_spec(300), seed=9)
    b = generate_synthetic(separable_spec(300), seed=9)
    write_csv(a, tmp_path / "a.csv")
    write_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_marginals_follow_spec():
    ld = generate_synthetic(two_gaussians_spec(20000, noise_columns=2), seed=1)
    x = ld.data.columns[0]
    for c, mean in ((1, 0.0), (2, 10.0)):
        v = x[ld.labels == c]
        assert abs(v.mean() - mean) < 0.05 and abs(v.std() - 1.0) < 0.05


@pytest.mark.parametrize("spec, msg", [
    ({"columns": [{"name": "x", "mixtures": [[[0.5, 0, 1]], [[1.0, 5, 1]]]}]}, "sum to 1"),
    ({"columns": [{"name": "x"}]}, "needs"),
    ({"columns": [{"mixtures": [[[1.0, 0, 1]], [[1.0, 5, 1]]]}]}, "name"),
    ({"columns": [{"name": "x", "latent": "zz"}], "latents": {"s": [[[1, 0, 1]], [[1, 1, 1]]]}}, "unknown latent"),
])
def test_invalid_specs(spec, msg):
    with pytest.raises(SpecError, match=msg):
        generate_synthetic(spec, seed=0, n=10)


def test_too_few_rows():
    with pytest.raises(SpecError):
        generate_synthetic(two_gaussians_spec(), seed=0, n=3)


def test_informative_factor_ranks_first():
    ld = generate_synthetic(two_gaussians_spec(10000, 10), seed=0)
    core = build_core(ld, 1, zone=SearchZone.square(2, hi=2), seed=0)
    ranking = core.reps.ranking
    top, runner_up = ranking[0][1], ranking[1][1]
    assert core.reps.indices[0] == ranking[0][0]
    assert top > 0.9 * entropy(ld.labels) and top > runner_up
    # the chosen factor carries the informative column in both class models
    for m in core.models:
        col = m.loadings[:, core.reps.indices[0]]
        assert abs(col[0]) > 0.3


def test_baseline_recovers_linear_signs(rng):
    w = rng.normal(size=8)
    w[np.abs(w) < 0.3] = 0.5

    def model(x):
        return np.where(np.atleast_2d(x) @ w > 0, 2, 1)

    hits = []
    for i in range(10):
        x = rng.normal(size=8) * 0.1
        res = baseline_local_surrogate(model, x, 2000, seed=i)
        sign = np.sign(res.coefficients) * (1 if res.target_class == 2 else -1)
        hits.append(np.mean(sign == np.sign(w)))
        assert res.seconds >= 0
    assert np.mean(hits) >= 0.9


def test_baseline_preconditions():
    with pytest.raises(ValueError):
        baseline_local_surrogate(lambda x: np.ones(len(x)), np.zeros(3), 5)

    def boom(x):
        raise KeyError("offline")
    with pytest.raises(RuntimeError, match="probe failed"):
        baseline_local_surrogate(boom, np.zeros(3), 50)
    with pytest.raises(TypeError):
        baseline_local_surrogate(object(), np.zeros(3), 50)


def test_timing_record_and_r2():
    with pytest.raises(ValueError):
        TimingRecord("x", 1, 1, -1.0)
    assert linear_fit_r2([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert linear_fit_r2([1, 2, 3, 4], [1, -1, 1, -1]) < 0.5


def test_explain_scaling_records(separable):
    spec = separable_spec()
    recs = explain_scaling(separable["core"], sizes=(50, 100, 200, 400, 800), repeats=1, spec=spec)
    assert [r.n for r in recs] == [50, 100, 200, 400, 800]
    assert all(r.seconds >= 0 and r.stage == "explain" for r in recs)


def test_mode_search_cost(rng):
    vals = [rng.normal(0, 1, 300), rng.normal(5, 1, 300)]
    full, fast = mode_search_cost(vals, SearchZone.square(2, hi=10))
    assert full.candidate_evaluations == 100
    assert fast.candidate_evaluations < full.candidate_evaluations
