import warnings

import numpy as np
import pytest

from ordsel.errors import DomainError, RankDeficiencyWarning
from ordsel.linmodel import Dataset, fdp, mse, orthonormalize, select_dims, select_model
from ordsel.simulation import (
    ScenarioSpec,
    batch_select_dims,
    empirical_curves,
    generate,
    make_beta_star,
    make_design,
    scenario_families,
    toy_spec,
    validation_response,
    vfold_cv_select,
)


def test_toy_beta_structure():
    beta = make_beta_star(toy_spec(0))
    assert beta.shape == (50,)
    assert beta[9] == 2.0
    assert np.all(beta[10:] == 0)
    gaps = -np.diff(beta[:10])
    assert np.all((gaps > 0.5) & (gaps < 1.5))
    np.testing.assert_array_equal(beta, make_beta_star(toy_spec(0)))
    assert not np.array_equal(beta, make_beta_star(toy_spec(1)))


def test_spec_validation():
    with pytest.raises(DomainError):
        ScenarioSpec("nope")
    with pytest.raises(DomainError):
        ScenarioSpec(design="sparse")
    with pytest.raises(DomainError):
        ScenarioSpec(sigma2=0.0)
    with pytest.raises(DomainError):
        ScenarioSpec(n=5, d_star=10)
    with pytest.raises(DomainError):
        ScenarioSpec("custom", beta=(1.0, 2.0))


def test_explicit_beta_sets_dimension():
    spec = ScenarioSpec("custom", n=20, p=8, beta=(3.0, 1.0, 0, 0, 0, 0, 0, 0))
    assert spec.d_star == 2


def test_noise_variance():
    spec = toy_spec(0, sigma2=4.0)
    data, truth = generate(spec, 0)
    res = np.concatenate([generate(spec, r)[0].Y - data.X @ truth.beta_star for r in range(200)])
    assert 3.5 <= res.var() <= 4.5


def test_design_rows_nest_across_n():
    small = make_design(ScenarioSpec("high-dimension", n=30, design="gaussian"))
    mid = make_design(ScenarioSpec("high-dimension", n=50, design="gaussian"))
    big = make_design(ScenarioSpec("high-dimension", n=300, design="gaussian"))
    np.testing.assert_array_equal(mid[:30], small)
    np.testing.assert_array_equal(big[:50], mid)
    canon = make_design(ScenarioSpec("high-dimension", n=30))
    np.testing.assert_array_equal(canon, np.eye(30, 50))


def test_scenario_families():
    specs = scenario_families(0)
    assert len(specs) == 12
    assert {s.name for s in specs} == {"sparsity", "complexity", "high-dimension", "noise"}
    assert all(s.p == 50 for s in specs)


@pytest.mark.parametrize("design", ["canonical", "gaussian"])
def test_batch_path_matches_per_dataset_path(design):
    spec = toy_spec(0, design=design)
    k = [2.0, 4.0, 8.0]
    curve = empirical_curves(spec, k, 40)
    fdps, mses = [], []
    for r in range(40):
        data, truth = generate(spec, r)
        model = orthonormalize(data)
        yv = validation_response(spec, r, data.X)
        row_f, row_m = [], []
        for K in k:
            sel = select_model(model, K, spec.sigma2)
            row_f.append(fdp(sel, truth))
            row_m.append(mse(sel, yv, data.X))
        fdps.append(row_f)
        mses.append(row_m)
    np.testing.assert_allclose(curve.fdr, np.mean(fdps, axis=0), atol=1e-12)
    np.testing.assert_allclose(curve.pr, np.mean(mses, axis=0), rtol=1e-10)


def test_batch_select_dims_matches_single():
    rng = np.random.default_rng(4)
    rows = []
    X = rng.standard_normal((30, 12))
    for _ in range(25):
        model = orthonormalize(Dataset(Y=X[:, :3].sum(axis=1) + rng.standard_normal(30), X=X))
        rows.append(model)
    coef = np.array([np.asarray(m.y_coef) for m in rows])
    perp = np.array([m.y_sq_norm - np.sum(np.asarray(m.y_coef) ** 2) for m in rows])
    k = np.linspace(0.5, 9, 12)
    got = batch_select_dims(coef, perp, k, 1.3)
    ref = np.array([select_dims(m, k, 1.3) for m in rows])
    np.testing.assert_array_equal(got, ref)


def test_threads_bit_identical():
    k = np.arange(2.0, 10.01, 0.5)
    a = empirical_curves(toy_spec(0), k, 700)
    b = empirical_curves(toy_spec(0), k, 700, threads=4)
    np.testing.assert_array_equal(a.fdr, b.fdr)
    np.testing.assert_array_equal(a.pr, b.pr)
    np.testing.assert_array_equal(a.fdr_ci, b.fdr_ci)


def test_heavier_penalty_lowers_fdr_on_toy():
    c = empirical_curves(toy_spec(0), [2.0, 6.0], 1000)
    assert c.fdr[1] < c.fdr[0]


def test_fdr_at_ten_below_fdr_at_two_everywhere():
    for spec in scenario_families(0):
        c = empirical_curves(spec, [2.0, 10.0], 300, with_pr=False)
        assert c.fdr[1] <= c.fdr[0]


def test_fdr_positive_at_vanishing_noise():
    c = empirical_curves(toy_spec(0, sigma2=1e-20), [2.0], 10_000, with_pr=False)
    assert c.fdr[0] > 0


def test_validation_error_tracks_conditional_risk():
    c = empirical_curves(toy_spec(0), [2.0, 4.0], 2000)
    assert np.all(np.abs(c.pr - c.pr_oracle) <= c.pr_ci * 1.5)


def test_replicate_count_validation():
    with pytest.raises(DomainError):
        empirical_curves(toy_spec(0), [2.0], 1)
    with pytest.raises(DomainError):
        empirical_curves(toy_spec(0), [0.0], 10)


def test_curve_serialization(tmp_path):
    c = empirical_curves(toy_spec(0), [2.0, 3.0], 20)
    c.to_csv(tmp_path / "c.csv")
    header = (tmp_path / "c.csv").read_text().splitlines()[0]
    assert header == "K,fdr,fdr_ci,pr,pr_ci"


def test_cv_zero_response_selects_empty_model():
    X = np.random.default_rng(0).standard_normal((30, 10))
    sel = vfold_cv_select(Dataset(Y=np.zeros(30), X=X), 5)
    assert sel.dim == 0
    assert sel.K is None


def test_cv_loo_strong_signal():
    spec = ScenarioSpec("custom", n=50, p=50, beta=(10.0,) * 5 + (0.0,) * 45, design="gaussian")
    dims = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficiencyWarning)
        for r in range(20):
            data, _ = generate(spec, r)
            dims.append(vfold_cv_select(data, 50, seed=r).dim)
    dims = np.array(dims)
    assert np.all(dims >= 5)
    values, counts = np.unique(dims, return_counts=True)
    assert values[np.argmax(counts)] == 5


def test_cv_warns_on_rank_deficient_folds():
    data, _ = generate(toy_spec(0), 0)
    with pytest.warns(RankDeficiencyWarning):
        vfold_cv_select(data, 10)


def test_cv_fold_count_validation():
    data, _ = generate(toy_spec(0), 0)
    with pytest.raises(DomainError):
        vfold_cv_select(data, 1)
    with pytest.raises(DomainError):
        vfold_cv_select(data, 51)
