"""Time-series alphas, two-pass regressions, joint alpha test, factor
subset posteriors and panel fixed effects, each checked against closed
forms computed independently in the test."""

import math

import numpy as np
import pandas as pd
import pytest

from cyrisk.portfolio import PortfolioSeries
from cyrisk.pricing import (
    MODEL_FACTORS,
    aggregate_by_weights,
    bs_marginal_likelihood,
    bs_posteriors,
    fama_macbeth,
    fe_determinants,
    fm_second_pass,
    grs_test,
    rolling_betas,
    ts_alpha,
)
from cyrisk.score import build_score_panel


def _month_index(n, start=2010):
    months = []
    for i in range(n):
        months.append(f"{start + i // 12}-{i % 12 + 1:02d}")
    return pd.Index(months, name="month")


def _factor_frame(rng, n, columns=("Mkt",)):
    data = {c: rng.normal(0.004, 0.04, size=n) for c in columns}
    return pd.DataFrame(data, index=_month_index(n))


# ---------------------------------------------------------------------------
# Time-series alphas


def test_ts_alpha_matches_simple_regression_closed_form():
    rng = np.random.default_rng(0)
    factors = _factor_frame(rng, 36)
    f = factors["Mkt"].to_numpy()
    y = 0.002 + 1.2 * f + rng.normal(0.0, 0.01, size=36)

    fit = ts_alpha(y, factors, "CAPM")

    n = y.size
    sxx = float(((f - f.mean()) ** 2).sum())
    beta = float(((f - f.mean()) * (y - y.mean())).sum()) / sxx
    alpha = y.mean() - beta * f.mean()
    resid = y - alpha - beta * f
    sigma2 = float(resid @ resid) / (n - 2)
    se_alpha = math.sqrt(sigma2 * (1.0 / n + f.mean() ** 2 / sxx))
    se_beta = math.sqrt(sigma2 / sxx)

    assert fit.params["alpha"] == pytest.approx(alpha, abs=1e-12)
    assert fit.params["Mkt"] == pytest.approx(beta, abs=1e-12)
    assert fit.std_errors["alpha"] == pytest.approx(se_alpha, abs=1e-12)
    assert fit.std_errors["Mkt"] == pytest.approx(se_beta, abs=1e-12)
    assert fit.t_stats["alpha"] == pytest.approx(alpha / se_alpha, abs=1e-10)
    tss = float(((y - y.mean()) ** 2).sum())
    assert fit.r_squared == pytest.approx(1.0 - float(resid @ resid) / tss, abs=1e-12)
    assert fit.nobs == 36


def test_ts_alpha_exact_fit_keeps_t_finite_or_huge():
    rng = np.random.default_rng(1)
    factors = _factor_frame(rng, 30)
    y = 0.01 + 2.0 * factors["Mkt"].to_numpy()
    fit = ts_alpha(y, factors, "CAPM")
    assert fit.params["alpha"] == pytest.approx(0.01, abs=1e-12)
    # Float rounding leaves a sliver of residual, so the t-stat is merely
    # astronomical; it must never come out as NaN.
    assert fit.t_stats["alpha"] > 1e10
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_ts_alpha_zero_returns_zero_t():
    rng = np.random.default_rng(24)
    factors = _factor_frame(rng, 30)
    fit = ts_alpha(np.zeros(30), factors, "CAPM")
    assert fit.params["alpha"] == 0.0
    assert fit.t_stats["alpha"] == 0.0
    assert not fit.t_stats.isna().any()


def test_ts_alpha_hac_matches_bartlett_loops():
    rng = np.random.default_rng(2)
    factors = _factor_frame(rng, 48)
    f = factors["Mkt"].to_numpy()
    y = 0.001 + 0.9 * f + rng.normal(0.0, 0.02, size=48)
    lags = 3

    fit = ts_alpha(y, factors, "CAPM", hac_lags=lags)

    n = y.size
    X = np.column_stack([np.ones(n), f])
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    u = X * (y - X @ beta)[:, None]
    meat = np.zeros((2, 2))
    for t in range(n):
        meat += np.outer(u[t], u[t])
    for lag in range(1, lags + 1):
        w = 1.0 - lag / (lags + 1.0)
        for t in range(lag, n):
            meat += w * (np.outer(u[t], u[t - lag]) + np.outer(u[t - lag], u[t]))
    bread = np.linalg.inv(X.T @ X)
    cov = bread @ meat @ bread * n / (n - 2)

    np.testing.assert_allclose(
        fit.std_errors.to_numpy(), np.sqrt(np.diag(cov)), atol=1e-12
    )


def test_ts_alpha_accepts_portfolio_series():
    rng = np.random.default_rng(3)
    factors = _factor_frame(rng, 24)
    series = PortfolioSeries(
        "P1", list(factors.index), 0.8 * factors["Mkt"].to_numpy() + 0.001
    )
    fit = ts_alpha(series, factors, "CAPM")
    assert fit.params["Mkt"] == pytest.approx(0.8, abs=1e-10)


def test_ts_alpha_model_factor_sets():
    rng = np.random.default_rng(4)
    factors = _factor_frame(rng, 40, columns=("Mkt", "SMB", "HML", "UMD", "RMW", "CMA"))
    y = rng.normal(0.0, 0.03, size=40)
    for model, wanted in MODEL_FACTORS.items():
        fit = ts_alpha(y, factors, model)
        assert list(fit.params.index) == ["alpha", *wanted]


def test_ts_alpha_validation():
    rng = np.random.default_rng(5)
    factors = _factor_frame(rng, 24)
    y = rng.normal(0.0, 0.02, size=24)
    with pytest.raises(ValueError, match="unknown model"):
        ts_alpha(y, factors, "FF3")
    with pytest.raises(ValueError, match="missing columns"):
        ts_alpha(y, factors, "FF5")
    with pytest.raises(ValueError, match="misaligned months"):
        ts_alpha(y[:-1], factors, "CAPM")
    shifted = pd.Series(y, index=_month_index(24, start=2015))
    with pytest.raises(ValueError, match="misaligned months"):
        ts_alpha(shifted, factors, "CAPM")


# ---------------------------------------------------------------------------
# Rolling betas


def test_rolling_betas_constant_loadings():
    rng = np.random.default_rng(6)
    factors = _factor_frame(rng, 30)
    wide = pd.DataFrame(
        {"A": 1.5 * factors["Mkt"] + 0.002, "B": -0.4 * factors["Mkt"]},
        index=factors.index,
    )
    betas = rolling_betas(wide, factors, window=24)["Mkt"]
    assert betas.iloc[:23].isna().all().all()
    np.testing.assert_allclose(betas.iloc[23:]["A"], 1.5, atol=1e-10)
    np.testing.assert_allclose(betas.iloc[23:]["B"], -0.4, atol=1e-10)


def test_rolling_betas_window_alignment_after_regime_switch():
    rng = np.random.default_rng(7)
    factors = _factor_frame(rng, 80)
    f = factors["Mkt"].to_numpy()
    loading = np.where(np.arange(80) < 40, 1.0, 3.0)
    wide = pd.DataFrame({"A": loading * f}, index=factors.index)
    betas = rolling_betas(wide, factors, window=24)["Mkt"]["A"]
    # The window ending at t=63 is the first that sits fully in the new
    # regime (t-23 = 40).
    assert abs(betas.iloc[62] - 3.0) > 1e-6
    np.testing.assert_allclose(betas.iloc[63:], 3.0, atol=1e-10)


def test_rolling_betas_skip_incomplete_windows():
    rng = np.random.default_rng(8)
    factors = _factor_frame(rng, 40)
    wide = pd.DataFrame(
        {"A": 1.0 * factors["Mkt"], "B": 0.5 * factors["Mkt"]}, index=factors.index
    )
    wide.iloc[10, wide.columns.get_loc("B")] = np.nan
    betas = rolling_betas(wide, factors, window=24)["Mkt"]
    assert betas["B"].iloc[23:34].isna().all()
    np.testing.assert_allclose(betas["B"].iloc[34:], 0.5, atol=1e-10)
    np.testing.assert_allclose(betas["A"].iloc[23:], 1.0, atol=1e-10)


def test_rolling_betas_validation():
    rng = np.random.default_rng(9)
    factors = _factor_frame(rng, 24)
    wide = pd.DataFrame({"A": factors["Mkt"]}, index=factors.index)
    with pytest.raises(ValueError, match="window too short"):
        rolling_betas(wide, factors, window=2)
    with pytest.raises(ValueError, match="misaligned months"):
        rolling_betas(wide.iloc[:-1], factors, window=12)


# ---------------------------------------------------------------------------
# Second-pass cross sections


def _fm_fixture():
    months = pd.Index(["2010-01", "2010-02", "2010-03"], name="month")
    returns = pd.DataFrame(
        [[0.0, 0.0, 0.0], [0.01, 0.03, 0.05], [0.02, 0.03, 0.06]],
        index=months,
        columns=["P1", "P2", "P3"],
    )
    betas = pd.DataFrame(
        [[1.0, 2.0, 3.0], [1.0, 2.0, 4.0], [2.0, 2.0, 2.0]],
        index=months,
        columns=["P1", "P2", "P3"],
    )
    return returns, {"Mkt": betas}


def test_fm_second_pass_hand_oracle():
    returns, betas = _fm_fixture()
    result = fm_second_pass(returns, betas)

    # 2010-01 has no lagged betas.  2010-02 regresses [.01,.03,.05] on
    # betas [1,2,3]: slope .02, intercept -.01, exact fit.  2010-03
    # regresses [.02,.03,.06] on [1,2,4]: slope 19/1400, intercept 1/200.
    assert result.n_months == 2
    assert list(result.gammas.index) == ["2010-02", "2010-03"]
    np.testing.assert_allclose(
        result.gammas["Mkt"].to_numpy(), [0.02, 19.0 / 1400.0], atol=1e-12
    )
    np.testing.assert_allclose(
        result.gammas["constant"].to_numpy(), [-0.01, 0.005], atol=1e-12
    )
    assert result.means["constant"] == pytest.approx(-0.0025, abs=1e-12)
    assert result.means["Mkt"] == pytest.approx(47.0 / 2800.0, abs=1e-12)
    assert result.std_errors["constant"] == pytest.approx(0.0075, abs=1e-12)
    assert result.t_stats["constant"] == pytest.approx(-1.0 / 3.0, abs=1e-12)
    assert result.mape == pytest.approx(1.0 / 1400.0, abs=1e-14)
    assert result.flagged_months == []


def test_fm_second_pass_flags_collinear_months():
    returns, betas = _fm_fixture()
    # Constant lagged betas in 2010-02 make that month's design rank one.
    betas["Mkt"].loc["2010-01"] = [2.0, 2.0, 2.0]
    result = fm_second_pass(returns, betas)
    assert result.flagged_months == ["2010-02"]


def test_fm_second_pass_with_scores_adds_term():
    returns, betas = _fm_fixture()
    scores = pd.DataFrame(
        [[0.1, 0.5, 0.9], [0.2, 0.4, 0.8], [0.3, 0.3, 0.3]],
        index=returns.index,
        columns=returns.columns,
    )
    result = fm_second_pass(returns, betas, scores)
    assert list(result.gammas.columns) == ["constant", "Mkt", "score"]


def test_fm_second_pass_insufficient_span():
    returns, betas = _fm_fixture()
    with pytest.raises(ValueError, match="insufficient span"):
        fm_second_pass(returns.iloc[:2], {"Mkt": betas["Mkt"].iloc[:2]})


def test_aggregate_by_weights_oracle():
    values = pd.DataFrame({"A": [0.1], "B": [0.3], "C": [0.5]})
    weights = pd.DataFrame(
        {
            "bin": [0, 0, 1],
            "asset_id": ["A", "B", "C"],
            "weight": [0.25, 0.75, 1.0],
        }
    )
    out = aggregate_by_weights(values, weights)
    assert out[0] == pytest.approx(0.25 * 0.1 + 0.75 * 0.3, abs=1e-15)
    assert out[1] == pytest.approx(0.5, abs=1e-15)


def test_fama_macbeth_recovers_planted_score_premium():
    rng = np.random.default_rng(10)
    n_firms, n_months = 30, 60
    months = _month_index(n_months)
    firms = [f"F{i:02d}" for i in range(n_firms)]
    score_values = rng.uniform(0.0, 1.0, size=n_firms)
    loadings = rng.uniform(0.8, 1.2, size=n_firms)
    factors = _factor_frame(rng, n_months)
    f = factors["Mkt"].to_numpy()

    gamma = 0.003
    rows = []
    for i, firm in enumerate(firms):
        eps = rng.normal(0.0, 0.004, size=n_months)
        rets = gamma * score_values[i] + loadings[i] * f + eps
        cap = float(np.exp(rng.normal(8.0, 0.4)))
        for t, month in enumerate(months):
            rows.append((firm, month, rets[t], cap))
    panel = pd.DataFrame(rows, columns=["asset_id", "month", "excess_return", "market_cap"])
    score_rows = []
    for year in (2010, 2011, 2012, 2013, 2014):
        for i, firm in enumerate(firms):
            score_rows.append((firm, f"{year}-06-30", {"overall": score_values[i]}))
    scores = build_score_panel(score_rows)

    result = fama_macbeth(panel, scores, factors, ("Mkt",), n_portfolios=6, window=24)
    assert result.means["score"] == pytest.approx(gamma, abs=0.0025)
    assert result.means["score"] > 0.0


def test_fama_macbeth_requires_factor_columns():
    panel = pd.DataFrame(columns=["asset_id", "month", "excess_return", "market_cap"])
    scores = build_score_panel([("A", "2010-01-01", {"overall": 0.2})])
    factors = pd.DataFrame({"Mkt": [0.01]}, index=_month_index(1))
    with pytest.raises(ValueError, match="missing columns"):
        fama_macbeth(panel, scores, factors, ("Mkt", "SMB"))


# ---------------------------------------------------------------------------
# Joint alpha test


def _grs_direct(Y, F):
    T, N = Y.shape
    K = F.shape[1]
    X = np.column_stack([np.ones(T), F])
    B = np.linalg.lstsq(X, Y, rcond=None)[0]
    alphas = B[0]
    E = Y - X @ B
    sigma = E.T @ E / T
    mu = F.mean(axis=0)
    omega = (F - mu).T @ (F - mu) / T
    num = alphas @ np.linalg.inv(sigma) @ alphas
    den = 1.0 + mu @ np.linalg.inv(omega) @ mu
    return (T - N - K) / N * num / den


def test_grs_matches_quadratic_form_oracle():
    rng = np.random.default_rng(11)
    T = 60
    F = rng.normal(0.005, 0.04, size=(T, 1))
    Y = np.column_stack(
        [
            0.001 + 1.1 * F[:, 0] + rng.normal(0.0, 0.02, size=T),
            -0.002 + 0.7 * F[:, 0] + rng.normal(0.0, 0.02, size=T),
        ]
    )
    result = grs_test(pd.DataFrame(Y), pd.DataFrame(F))
    assert result.statistic == pytest.approx(_grs_direct(Y, F), abs=1e-10)
    assert 0.0 <= result.p_value <= 1.0
    assert (result.n_assets, result.n_factors, result.n_months) == (2, 1, T)


def test_grs_invariant_to_rescaling():
    rng = np.random.default_rng(12)
    T = 90
    F = rng.normal(0.004, 0.04, size=(T, 2))
    Y = F @ np.array([[1.0, 0.5, -0.2], [0.3, 0.8, 1.1]])
    Y += rng.normal(0.0, 0.02, size=Y.shape) + np.array([0.001, 0.0, -0.001])
    base = grs_test(pd.DataFrame(Y), pd.DataFrame(F)).statistic
    scaled_y = grs_test(pd.DataFrame(3.0 * Y), pd.DataFrame(F)).statistic
    scaled_f = grs_test(pd.DataFrame(Y), pd.DataFrame(2.0 * F)).statistic
    assert scaled_y == pytest.approx(base, abs=1e-10)
    assert scaled_f == pytest.approx(base, abs=1e-10)


def test_grs_validation():
    rng = np.random.default_rng(13)
    Y = rng.normal(size=(5, 4))
    F = rng.normal(size=(5, 1))
    with pytest.raises(ValueError, match="insufficient span"):
        grs_test(pd.DataFrame(Y), pd.DataFrame(F))
    with pytest.raises(ValueError, match="misaligned months"):
        grs_test(pd.DataFrame(rng.normal(size=(30, 2))), pd.DataFrame(rng.normal(size=(29, 1))))


def test_grs_degenerate_covariance():
    rng = np.random.default_rng(14)
    T = 40
    F = rng.normal(0.0, 0.04, size=(T, 1))
    y = 0.9 * F[:, 0] + rng.normal(0.0, 0.02, size=T)
    Y = np.column_stack([y, y])  # identical assets, singular residual cov
    with pytest.raises(ValueError, match="nonpositive-definite covariance"):
        grs_test(pd.DataFrame(Y), pd.DataFrame(F))


# ---------------------------------------------------------------------------
# Factor-subset marginal likelihoods


def _bs_direct(included, excluded, market, prior_multiple):
    """Transcription of the two-block marginal likelihood with explicit
    determinants, kept independent of the library implementation."""
    T = market.size
    log_ml = 0.0
    n_inc = included.shape[1]
    n_exc = excluded.shape[1]
    if n_inc:
        X = np.column_stack([np.ones(T), market])
        B = np.linalg.lstsq(X, included, rcond=None)[0]
        E = included - X @ B
        S = E.T @ E
        mu = market.mean()
        omega = float(((market - mu) ** 2).mean())
        sh2 = mu * mu / omega
        a = (1.0 + sh2) / T
        k = sh2 / n_inc * (prior_multiple**2 - 1.0)
        alphas = B[0]
        w_stat = T * float(alphas @ np.linalg.inv(S / T) @ alphas) / (1.0 + sh2)
        log_q = -(T - 1) / 2.0 * math.log(1.0 + (a / (a + k)) * (w_stat / T))
        log_q += -n_inc / 2.0 * math.log(1.0 + k / a)
        log_ml += (
            -n_inc / 2.0 * math.log(float(market @ market))
            - (T - 1) / 2.0 * math.log(np.linalg.det(S))
            + log_q
        )
    if n_exc:
        X = np.column_stack([market, included]) if n_inc else market[:, None]
        B = np.linalg.lstsq(X, excluded, rcond=None)[0]
        E = excluded - X @ B
        S_r = E.T @ E
        log_ml += -n_exc / 2.0 * math.log(np.linalg.det(X.T @ X))
        log_ml += -(T - X.shape[1]) / 2.0 * math.log(np.linalg.det(S_r))
    return log_ml


def test_bs_marginal_likelihood_matches_direct_form():
    rng = np.random.default_rng(15)
    T = 48
    market = rng.normal(0.005, 0.04, size=T)
    included = 0.3 * market[:, None] + rng.normal(0.0, 0.02, size=(T, 2))
    excluded = rng.normal(0.0, 0.03, size=(T, 1))
    got = bs_marginal_likelihood(included, excluded, market, prior_multiple=1.25)
    want = _bs_direct(included, excluded, market, 1.25)
    assert got == pytest.approx(want, abs=1e-10)


def test_bs_marginal_likelihood_null_model():
    rng = np.random.default_rng(16)
    T = 40
    market = rng.normal(0.004, 0.04, size=T)
    excluded = rng.normal(0.0, 0.03, size=(T, 2))
    got = bs_marginal_likelihood(np.empty((T, 0)), excluded, market)
    want = _bs_direct(np.empty((T, 0)), excluded, market, 1.25)
    assert got == pytest.approx(want, abs=1e-10)


def test_bs_marginal_likelihood_k_modes_differ():
    rng = np.random.default_rng(17)
    T = 60
    market = rng.normal(0.0, 0.04, size=T)
    # Pin the sample mean so the sample Sharpe stays small enough for the
    # negative-k convention to remain on its feasible branch.
    market = market - market.mean() + 0.001
    included = 0.5 * market[:, None] + rng.normal(0.0, 0.02, size=(T, 1))
    a = bs_marginal_likelihood(included, np.empty((T, 0)), market, k_mode="original")
    b = bs_marginal_likelihood(included, np.empty((T, 0)), market, k_mode="as-printed")
    assert a != b


def test_bs_marginal_likelihood_as_printed_degenerates_on_high_sharpe():
    rng = np.random.default_rng(18)
    T = 48
    market = 0.05 + rng.normal(0.0, 0.0001, size=T)
    included = 0.4 * market[:, None] + rng.normal(0.0, 0.02, size=(T, 1))
    with pytest.raises(ValueError, match="prior weight degenerate"):
        bs_marginal_likelihood(included, np.empty((T, 0)), market, k_mode="as-printed")


def test_bs_marginal_likelihood_validation():
    rng = np.random.default_rng(19)
    T = 30
    market = rng.normal(0.004, 0.04, size=T)
    inc = rng.normal(size=(T, 1))
    with pytest.raises(ValueError, match="prior multiple"):
        bs_marginal_likelihood(inc, None, market, prior_multiple=1.0)
    with pytest.raises(ValueError, match="unknown k_mode"):
        bs_marginal_likelihood(inc, None, market, k_mode="other")
    with pytest.raises(ValueError, match="zero variance"):
        bs_marginal_likelihood(inc, None, np.full(T, 0.01))
    with pytest.raises(ValueError, match="misaligned months"):
        bs_marginal_likelihood(rng.normal(size=(T - 1, 1)), None, market)


def test_bs_posteriors_sum_to_one_everywhere():
    rng = np.random.default_rng(20)
    factors = _factor_frame(rng, 90, columns=("Mkt", "A", "B", "C"))
    post = bs_posteriors(
        factors, ["A", "B", "C"], expanding=True, min_months=80
    )
    assert len(post.probabilities) == 8
    assert post.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    by_month = post.path.groupby("month")["probability"].sum()
    np.testing.assert_allclose(by_month.to_numpy(), 1.0, atol=1e-9)


def test_bs_posteriors_factor_path_consistent_with_subsets():
    rng = np.random.default_rng(21)
    factors = _factor_frame(rng, 70, columns=("Mkt", "A", "B"))
    post = bs_posteriors(factors, ["A", "B"], expanding=True, min_months=65)
    last = post.path["month"].max()
    subset_probs = post.path[post.path["month"] == last]
    for factor in ("A", "B"):
        want = subset_probs[
            subset_probs["subset_id"].map(lambda s: factor in s.split("+"))
        ]["probability"].sum()
        got = post.factor_path[
            (post.factor_path["month"] == last) & (post.factor_path["factor"] == factor)
        ]["probability"].iloc[0]
        assert got == pytest.approx(want, abs=1e-12)


def test_bs_posteriors_equal_evidence_is_exactly_uniform(monkeypatch):
    import cyrisk.pricing as pricing_module

    monkeypatch.setattr(
        pricing_module, "bs_marginal_likelihood", lambda *a, **k: 0.0
    )
    rng = np.random.default_rng(22)
    factors = _factor_frame(rng, 40, columns=("Mkt", "A", "B", "C"))
    post = bs_posteriors(factors, ["A", "B", "C"])
    assert (post.probabilities.to_numpy() == 0.125).all()


def test_bs_posteriors_validation():
    rng = np.random.default_rng(23)
    factors = _factor_frame(rng, 40, columns=("Mkt", "A"))
    with pytest.raises(ValueError, match="market column"):
        bs_posteriors(factors, ["A"], market_col="MKT")
    with pytest.raises(ValueError, match="candidate columns missing"):
        bs_posteriors(factors, ["A", "B"])
    with pytest.raises(ValueError, match="at most 8"):
        bs_posteriors(factors, [f"X{i}" for i in range(9)])
    with pytest.raises(ValueError, match="min_months"):
        bs_posteriors(factors, ["A"], expanding=True, min_months=1)


# ---------------------------------------------------------------------------
# Panel fixed effects


def _balanced_panel():
    rows = []
    x = [[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 9.0]]
    y = [[2.1, 4.3, 6.0], [4.2, 8.5, 10.1], [6.4, 10.2, 18.3]]
    for i, firm in enumerate(["F1", "F2", "F3"]):
        for t, year in enumerate([2010, 2011, 2012]):
            rows.append((firm, year, y[i][t], x[i][t]))
    return pd.DataFrame(rows, columns=["firm", "year", "rating", "exposure"])


def test_fe_matches_balanced_within_transform():
    frame = _balanced_panel()
    result = fe_determinants(frame, "rating", ["exposure"])

    # Balanced two-way demeaning has the closed form
    # z_it - z_i. - z_.t + z_.. which the iterative sweep must reproduce.
    def within(col):
        wide = frame.pivot(index="firm", columns="year", values=col).to_numpy()
        return (
            wide
            - wide.mean(axis=1, keepdims=True)
            - wide.mean(axis=0, keepdims=True)
            + wide.mean()
        ).ravel()

    yw = within("rating")
    xw = within("exposure")
    slope = float(xw @ yw) / float(xw @ xw)
    assert result.params["exposure"] == pytest.approx(slope, abs=1e-10)

    resid = yw - slope * xw
    sigma2 = float(resid @ resid) / (len(yw) - 1)
    se_ols = math.sqrt(sigma2 / float(xw @ xw))
    assert result.std_errors_ols["exposure"] == pytest.approx(se_ols, abs=1e-10)
    assert result.nobs == 9
    assert result.n_clusters == 3


def test_fe_clustered_se_matches_sandwich():
    frame = _balanced_panel()
    result = fe_determinants(frame, "rating", ["exposure"])

    def within(col):
        wide = frame.pivot(index="firm", columns="year", values=col).to_numpy()
        return (
            wide
            - wide.mean(axis=1, keepdims=True)
            - wide.mean(axis=0, keepdims=True)
            + wide.mean()
        )

    yw = within("rating")
    xw = within("exposure")
    slope = float(xw.ravel() @ yw.ravel()) / float(xw.ravel() @ xw.ravel())
    resid = yw - slope * xw
    meat = sum(float(xw[g] @ resid[g]) ** 2 for g in range(3))
    denom = float(xw.ravel() @ xw.ravel())
    cov = meat / denom**2 * 3.0 / 2.0
    assert result.std_errors["exposure"] == pytest.approx(math.sqrt(cov), abs=1e-10)


def test_fe_absorbed_regressor_dropped_with_warning():
    frame = _balanced_panel()
    frame["firm_level"] = frame["firm"].map({"F1": 1.0, "F2": 2.0, "F3": 5.0})
    with pytest.warns(UserWarning, match="absorbed by fixed effects"):
        result = fe_determinants(frame, "rating", ["exposure", "firm_level"])
    assert result.dropped == ["firm_level"]
    assert list(result.params.index) == ["exposure"]


def test_fe_all_absorbed_raises():
    frame = _balanced_panel()
    frame["firm_level"] = frame["firm"].map({"F1": 1.0, "F2": 2.0, "F3": 5.0})
    with pytest.warns(UserWarning):
        with pytest.raises(ValueError, match="all regressors absorbed"):
            fe_determinants(frame, "rating", ["firm_level"])


def test_fe_missing_column():
    frame = _balanced_panel()
    with pytest.raises(ValueError, match="missing column"):
        fe_determinants(frame, "rating", ["no_such"])


def test_fe_clustered_exceeds_plain_under_random_slopes():
    ratios = []
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        rows = []
        for i in range(30):
            slope_shift = rng.normal(0.0, 0.6)
            for t in range(8):
                x = rng.normal(0.0, 1.0)
                y = (1.0 + slope_shift) * x + rng.normal(0.0, 0.3)
                rows.append((f"F{i}", 2010 + t, y, x))
        frame = pd.DataFrame(rows, columns=["firm", "year", "rating", "exposure"])
        result = fe_determinants(frame, "rating", ["exposure"])
        ratios.append(result.std_errors["exposure"] / result.std_errors_ols["exposure"])
    assert np.mean(ratios) > 1.1
