import warnings

import numpy as np
import pandas as pd
import pytest

from poisim.analysis import (REFUTERS, BEHAVIORAL_FACTORS, SAMPLE_COLUMNS, EstimationError, OverlapWarning,
                             PathModelError, PathModelSpec, ScalingError, analyze_table, bc_interval,
                             binarize, bootstrap_effects, decompose_effects, default_model,
                             estimate_ate, fit_logistic, fit_path_model, format_report, min_max_scale,
                             read_sample_table, refute, stars, validate_table, write_sample_table)
from poisim.analysis.paths import bootstrap_p


def synth_ate(n=800, seed=0, effect=0.3, confounded=True):
    """Binary treatment with a known additive effect on a binary outcome."""
    rng = np.random.default_rng(seed)
    c1 = rng.random(n)
    c2 = rng.integers(0, 2, n).astype(float)
    if confounded:
        e = 1 / (1 + np.exp(-(-1.5 + 2 * c1 + c2)))
    else:
        e = np.full(n, 0.5)
    t = (rng.random(n) < e).astype(int)
    y = (rng.random(n) < 0.1 + effect * t + 0.3 * c1 + 0.2 * c2).astype(int)
    return pd.DataFrame({"c1": c1, "c2": c2, "t": t, "y": y})


def chain_table(n=800, seed=0, a=0.8, b=0.6, c=0.0, noise=0.1, m_noise=None):
    rng = np.random.default_rng(seed)
    x = rng.random(n)
    m = a * x + (noise if m_noise is None else m_noise) * rng.standard_normal(n)
    y = b * m + c * x + noise * rng.standard_normal(n)
    return pd.DataFrame({"x": x, "m": m, "y": y})


CHAIN = PathModelSpec.parse("m ~ x\ny ~ x + m")


# -- scaling and binarization ---------------------------------------------------

def test_min_max_examples():
    t = pd.DataFrame({"a": [0.0, 5.0, 10.0, 5.0], "b": [2.0, 4.0, 4.0, 6.0], "c": [0.0, 0.3, 1.0, 0.7]})
    s = min_max_scale(t)
    assert s.a.tolist() == [0, 0.5, 1, 0.5]
    assert s.b.tolist() == [0, 0.5, 0.5, 1]
    assert s.c.tolist() == t.c.tolist()
    pd.testing.assert_frame_equal(min_max_scale(s), s)


def test_min_max_constant_column():
    with pytest.raises(ScalingError, match="'k'"):
        min_max_scale(pd.DataFrame({"x": [1.0, 2.0], "k": [3.0, 3.0]}))


def test_binarize_examples():
    assert binarize([1, 2, 3, 4]).tolist() == [0, 0, 1, 1]
    assert binarize([5, 5, 5]).tolist() == [0, 0, 0]
    assert binarize([0, 0, 9]).tolist() == [0, 0, 1]
    with pytest.raises(ValueError):
        binarize([])


def test_table_io(tmp_path):
    rng = np.random.default_rng(0)
    t = pd.DataFrame(rng.random((5, len(SAMPLE_COLUMNS))), columns=SAMPLE_COLUMNS).assign(extra=1)
    write_sample_table(t, tmp_path / "s.csv")
    back = read_sample_table(tmp_path / "s.csv")
    assert list(back.columns) == SAMPLE_COLUMNS
    np.testing.assert_allclose(back.to_numpy(), t[SAMPLE_COLUMNS].to_numpy(), rtol=1e-12)
    with pytest.raises(ValueError, match="lacks"):
        validate_table(t.drop(columns="e_ave"))
    t.loc[2, "c_new"] = np.nan
    with pytest.raises(ValueError, match="c_new"):
        validate_table(t)


# -- model spec -------------------------------------------------------------------

def test_parse_and_graph():
    spec = PathModelSpec.parse("# comment\nm ~ x\ny ~ x + m  # outcome\n", name="chain")
    assert spec.dependents == ["m", "y"]
    assert spec.exogenous == ["x"] and spec.outcomes == ["y"]
    assert sorted(spec.paths("x", "y"), key=len) == [("x", "y"), ("x", "m", "y")]
    assert PathModelSpec.parse(spec.to_text()) == PathModelSpec.parse(spec.to_text())


def test_cycle_rejected():
    with pytest.raises(PathModelError, match="cycl"):
        PathModelSpec.parse("a ~ b\nb ~ a").order()


def test_default_models():
    a, b = default_model("A"), default_model("B")
    assert a.outcomes == ["c_new"] and b.outcomes == ["e_ave"]
    assert set(a.exogenous) == set(BEHAVIORAL_FACTORS)
    paths = a.paths("n_stopping", "c_new")
    assert ("n_stopping", "t_total_stop", "sigma_spaces", "c_new") in paths
    assert len(paths) == 4
    with pytest.raises(PathModelError):
        default_model("C")


# -- OLS and path algebra ---------------------------------------------------------

def test_ols_recovers_slope():
    rng = np.random.default_rng(1)
    x = rng.random(800)
    t = pd.DataFrame({"x": x, "y": 0.5 * x + 0.01 * rng.standard_normal(800)})
    fit = fit_path_model(t, PathModelSpec.parse("y ~ x"))
    assert 0.48 <= fit.coefficients[("x", "y")] <= 0.52
    assert fit.fit_indices == {"chi2": 0.0, "df": 0, "p": 1.0, "chi2_df": 0.0, "gfi": 1.0,
                               "cfi": 1.0, "rmsea": 0.0}


def test_chain_indirect():
    fit = fit_path_model(chain_table(noise=0.02, m_noise=0.2), CHAIN)
    eff = {e.label or "total": e for e in decompose_effects(fit)}
    assert eff["x -> m -> y"].estimate == pytest.approx(0.48, abs=0.01)
    assert eff["x -> m -> y"].estimate == fit.coefficients[("x", "m")] * fit.coefficients[("m", "y")]
    assert eff["total"].estimate == pytest.approx(eff["x -> y"].estimate + eff["x -> m -> y"].estimate,
                                                  rel=1e-15)


def test_three_segment_chain_and_identity():
    rng = np.random.default_rng(2)
    x = rng.random(500)
    m1 = 0.7 * x + 0.1 * rng.standard_normal(500)
    m2 = 0.5 * m1 + 0.1 * rng.standard_normal(500)
    y = 0.9 * m2 + 0.2 * x + 0.1 * rng.standard_normal(500)
    spec = PathModelSpec.parse("m1 ~ x\nm2 ~ m1 + x\ny ~ m2 + m1 + x")
    fit = fit_path_model(pd.DataFrame({"x": x, "m1": m1, "m2": m2, "y": y}), spec)
    effects = decompose_effects(fit)
    c = fit.coefficients
    long = next(e for e in effects if e.path == ("x", "m1", "m2", "y"))
    assert long.estimate == c[("x", "m1")] * c[("m1", "m2")] * c[("m2", "y")]
    parts = [e for e in effects if e.kind != "total"]
    total = next(e for e in effects if e.kind == "total")
    assert total.estimate == pytest.approx(sum(e.estimate for e in parts), rel=1e-14)
    assert total.std_estimate == pytest.approx(sum(e.std_estimate for e in parts), rel=1e-14)


def test_zero_mediator_total_is_direct():
    fit = fit_path_model(chain_table(), CHAIN)
    fit.coefficients[("x", "m")] = 0.0
    eff = decompose_effects(fit)
    assert eff[-1].estimate == eff[0].estimate


def test_decompose_errors():
    fit = fit_path_model(chain_table(), CHAIN)
    with pytest.raises(PathModelError):
        decompose_effects(fit, independents=["z"])
    with pytest.raises(PathModelError):
        decompose_effects(fit, independents=["y"], dependent="m")


def test_rank_deficient_names_columns():
    t = chain_table()
    t["x2"] = 2 * t.x
    with pytest.raises(EstimationError, match="x2"):
        fit_path_model(t, PathModelSpec.parse("y ~ x + x2"))


def test_standardized_coefficients():
    t = chain_table(c=0.3)
    fit = fit_path_model(t, CHAIN)
    b = fit.coefficients[("x", "y")]
    assert fit.std_coefficients[("x", "y")] == pytest.approx(b * t.x.std() / t.y.std(), rel=1e-12)


def test_convergence_rate():
    errs = {}
    for n in (100, 400, 1600):
        e = []
        for s in range(200):
            rng = np.random.default_rng([n, s])
            x = rng.standard_normal(n)
            y = 0.5 * x + rng.standard_normal(n)
            fit = fit_path_model(pd.DataFrame({"x": x, "y": y}), PathModelSpec.parse("y ~ x"),
                                 with_indices=False)
            e.append(fit.coefficients[("x", "y")] - 0.5)
        errs[n] = np.sqrt(np.mean(np.square(e)))
    # quadrupling n halves the RMS error
    assert 1.6 < errs[100] / errs[400] < 2.5
    assert 1.6 < errs[400] / errs[1600] < 2.5
    assert errs[100] == pytest.approx(0.1, rel=0.2)


def test_fit_indices_for_omitted_arrow():
    rng = np.random.default_rng(3)
    t = chain_table(c=0.0, seed=3)
    fi = fit_path_model(t, PathModelSpec.parse("m ~ x\ny ~ m")).fit_indices
    assert fi["df"] == 1 and 0 <= fi["chi2"] < 10 and fi["p"] > 0.001
    t = chain_table(c=0.5, seed=3)
    bad = fit_path_model(t, PathModelSpec.parse("m ~ x\ny ~ m")).fit_indices
    assert bad["chi2"] > 100 and bad["cfi"] < fi["cfi"] and bad["rmsea"] > 0.1
    del rng


# -- bootstrap ------------------------------------------------------------------

def test_bootstrap_strong_effect():
    rng = np.random.default_rng(4)
    x = rng.random(800)
    t = pd.DataFrame({"x": x, "y": 0.5 * x + 0.05 * rng.standard_normal(800)})
    rep = bootstrap_effects(t, PathModelSpec.parse("y ~ x"), resamples=1000, seed=1)
    row = rep.iloc[0]
    assert row.ci_low > 0 and row.ci_high - row.ci_low < 0.1
    assert row.decision == "significant positive" and row.stars == "***"


def test_bootstrap_null_effect():
    rng = np.random.default_rng(5)
    t = pd.DataFrame({"x": rng.random(400), "y": rng.random(400)})
    row = bootstrap_effects(t, PathModelSpec.parse("y ~ x"), resamples=500, seed=2).iloc[0]
    assert row.ci_low < 0 < row.ci_high and row.decision == "not significant"


def test_bootstrap_deterministic_and_validated():
    t = chain_table(n=200)
    a = bootstrap_effects(t, CHAIN, resamples=200, seed=7)
    b = bootstrap_effects(t, CHAIN, resamples=200, seed=7)
    pd.testing.assert_frame_equal(a, b)
    assert list(a.effect) == ["direct", "indirect", "total"]
    with pytest.raises(ValueError):
        bootstrap_effects(t, CHAIN, resamples=99)
    with pytest.raises(ValueError):
        bootstrap_effects(t, CHAIN, resamples=200, ci=100)


def test_bootstrap_redraws_degenerate_resamples():
    # a rare binary regressor: some resamples miss the single 1
    rng = np.random.default_rng(6)
    x = np.zeros(12)
    x[0] = 1.0
    t = pd.DataFrame({"x": x, "y": x + 0.1 * rng.standard_normal(12)})
    rep = bootstrap_effects(t, PathModelSpec.parse("y ~ x"), resamples=200, seed=0, max_retries=50)
    assert np.isfinite(rep.ci_low).all()
    with pytest.raises(EstimationError):
        bootstrap_effects(t.iloc[:1].pipe(lambda d: pd.concat([d] * 12 + [t.iloc[1:2]])),
                          PathModelSpec.parse("y ~ x"), resamples=100, seed=0, max_retries=0)


def test_bc_interval_symmetric():
    draws = np.random.default_rng(0).standard_normal(100_000)
    lo, hi = bc_interval(0.0, draws, 95)
    assert lo == pytest.approx(-1.96, abs=0.03) and hi == pytest.approx(1.96, abs=0.03)
    lo, hi = bc_interval(0.5, draws, 95)  # estimate above the draws' median shifts the interval up
    assert lo > -1.96


def test_stars_and_p():
    assert [stars(p) for p in (0.001, 0.02, 0.07, 0.2)] == ["***", "**", "*", ""]
    assert bootstrap_p(np.array([1.0, 2.0, 3.0, -1.0])) == 0.5
    assert bootstrap_p(np.ones(10)) == 0.0


def test_format_report():
    t = chain_table(n=200)
    fit = fit_path_model(t, CHAIN)
    text = format_report(bootstrap_effects(t, CHAIN, resamples=100), fit, title="Chain")
    assert text.startswith("Chain\n=====")
    assert "x -> m -> y" in text and "chi2=" in text


# -- causal -----------------------------------------------------------------------

def test_logistic_recovers_coefficients():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((20000, 2))
    p = 1 / (1 + np.exp(-(0.3 + 1.0 * X[:, 0] - 0.5 * X[:, 1])))
    y = (rng.random(20000) < p).astype(float)
    np.testing.assert_allclose(fit_logistic(X, y), [0.3, 1.0, -0.5], atol=0.06)


def test_ate_randomized():
    res = estimate_ate(synth_ate(confounded=False, seed=1), "t", "y", ["c1", "c2"])
    assert res.ate == pytest.approx(0.3, abs=0.05)
    assert res.treated + res.control == 800


def test_ate_null():
    d = synth_ate(effect=0.0, confounded=False, seed=2)
    assert abs(estimate_ate(d, "t", "y", ["c1", "c2"]).ate) < 0.05


def test_ate_confounded_recovered():
    d = synth_ate(seed=0)
    naive = d[d.t == 1].y.mean() - d[d.t == 0].y.mean()
    res = estimate_ate(d, "t", "y", ["c1", "c2"])
    assert naive - 0.3 > 0.05  # the raw difference is biased upward
    assert res.ate == pytest.approx(0.3, abs=0.05)


@pytest.mark.filterwarnings("ignore:logistic fit did not converge")
def test_ate_errors_and_overlap_warning():
    d = synth_ate()
    with pytest.raises(ValueError):
        estimate_ate(d.assign(t=0), "t", "y", ["c1"])
    with pytest.raises(ValueError, match="binary"):
        estimate_ate(d.assign(y=d.c1), "t", "y", ["c1"])
    sep = d.assign(t=(d.c1 > 0.5).astype(int))
    with pytest.warns(OverlapWarning, match="clipped"):
        res = estimate_ate(sep, "t", "y", ["c1"])
    assert res.clipped > 0


def test_refuters():
    d = synth_ate(seed=0)
    res = estimate_ate(d, "t", "y", ["c1", "c2"])
    out = {m: refute(d, res.ate, m, "t", "y", ["c1", "c2"], simulations=100, seed=i)
           for i, m in enumerate(REFUTERS)}
    assert abs(out["random_common_cause"].new_effect - res.ate) < 0.02
    assert abs(out["placebo_treatment"].new_effect) < 0.05
    assert out["data_subset"].new_effect == pytest.approx(0.3, abs=0.05)
    assert all(r.p_value > 0.05 and r.robust for r in out.values())
    with pytest.raises(ValueError):
        refute(d, res.ate, "bogus", "t", "y", ["c1"])


def test_refute_deterministic():
    d = synth_ate(n=300)
    a = refute(d, 0.3, "data_subset", "t", "y", ["c1", "c2"], simulations=20, seed=5)
    b = refute(d, 0.3, "data_subset", "t", "y", ["c1", "c2"], simulations=20, seed=5)
    assert a == b


# -- end to end -------------------------------------------------------------------

def synthetic_sample_table(n=400, seed=0):
    rng = np.random.default_rng(seed)
    nc = rng.choice([4, 16, 36, 64], n).astype(float)
    dc = rng.integers(0, 2, n).astype(float)
    ns = rng.integers(1, 6, n).astype(float)
    ts = rng.integers(1, 6, n) * 60.0
    tt = ns * ts
    sigma = 30 - 0.2 * nc - 5 * dc + 0.01 * tt + rng.normal(0, 2, n)
    c_new = 100 - 0.5 * nc - 10 * dc + 5 * ns + 0.05 * ts + 1.5 * sigma + rng.normal(0, 5, n)
    e_ave = 0.1 * c_new + rng.normal(0, 1, n)
    return pd.DataFrame(dict(zip(SAMPLE_COLUMNS, [nc, dc, ns, ts, tt, sigma, c_new, e_ave])))


def test_analyze_table_end_to_end():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OverlapWarning)
        res = analyze_table(synthetic_sample_table(), resamples=200, refutations=10)
    eff = res.effects["Model A"]
    direct = eff[eff.effect == "direct"].set_index("independent").estimate
    assert direct.n_crowding < 0 and direct.d_crowding < 0
    assert direct.n_stopping > 0 and direct.t_stopping > 0
    assert set(res.ate) == {"c_new_bin", "e_ave_bin"}
    assert res.ate["c_new_bin"].ate > 0
    frame = res.ate_frame()
    assert {"random_common_cause_p", "placebo_treatment", "data_subset"} <= set(frame.columns)
    text = res.text()
    assert "Model A" in text and "Model B" in text and "placebo_treatment" in text
    assert len(res.effects_frame()) == 2 * len(eff)
