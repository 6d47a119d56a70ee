"""Asset-pricing test battery.

Time-series alphas under CAPM, a four-factor model with momentum, and a
five-factor model; two-pass cross-sectional regressions with rolling
betas; the finite-sample joint alpha test; Bayesian marginal likelihoods
for factor-subset comparison with a prior on the attainable Sharpe ratio;
and panel fixed-effects regressions with firm-clustered standard errors.

Plain OLS standard errors are the default everywhere.  A lag-robust
covariance (Newey-West) is available behind ``hac_lags`` for the
time-series regressions but is never switched on silently.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import stats

logger = logging.getLogger(__name__)

MODEL_FACTORS: dict[str, tuple[str, ...]] = {
    "CAPM": ("Mkt",),
    "FFC": ("Mkt", "SMB", "HML", "UMD"),
    "FF5": ("Mkt", "SMB", "HML", "RMW", "CMA"),
}

# Cross-sectional design matrices with condition numbers above this are
# flagged as collinear months in the second pass.
COLLINEARITY_LIMIT = 1e8

_SINGULAR_LIMIT = 1e12


@dataclass
class RegressionFit:
    """OLS output with enough detail to rebuild every reported statistic."""

    params: pd.Series
    std_errors: pd.Series
    t_stats: pd.Series
    residuals: np.ndarray = field(repr=False)
    r_squared: float
    r_squared_adj: float
    nobs: int


def _ols(X: np.ndarray, y: np.ndarray, names: Sequence[str], *, hac_lags: int | None = None) -> RegressionFit:
    cond = np.linalg.cond(X)
    if cond > _SINGULAR_LIMIT:
        raise ValueError(f"singular design matrix (condition number {cond:.3e})")
    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    n, k = X.shape
    dof = n - k
    if dof <= 0:
        raise ValueError("insufficient span: more parameters than observations")
    ssr = float(resid @ resid)
    xtx_inv = np.linalg.inv(X.T @ X)
    if hac_lags is None:
        sigma2 = ssr / dof
        cov = xtx_inv * sigma2
    else:
        cov = _hac_cov(X, resid, xtx_inv, hac_lags)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    # Zero-residual guard: exact fits get infinite t-stats, not NaN.
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = np.where(se > 0.0, beta / np.where(se > 0.0, se, 1.0), np.sign(beta) * np.inf)
        tvals = np.where((se == 0.0) & (beta == 0.0), 0.0, tvals)
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ssr / tss if tss > 0.0 else 1.0
    r2_adj = 1.0 - (1.0 - r2) * (n - 1) / dof
    idx = pd.Index(names)
    return RegressionFit(
        pd.Series(beta, index=idx),
        pd.Series(se, index=idx),
        pd.Series(tvals, index=idx),
        resid,
        r2,
        r2_adj,
        n,
    )


def _hac_cov(X: np.ndarray, resid: np.ndarray, xtx_inv: np.ndarray, lags: int) -> np.ndarray:
    """Newey-West covariance with Bartlett weights."""
    scores = X * resid[:, None]
    meat = scores.T @ scores
    n = X.shape[0]
    for lag in range(1, lags + 1):
        weight = 1.0 - lag / (lags + 1.0)
        gamma = scores[lag:].T @ scores[:-lag]
        meat += weight * (gamma + gamma.T)
    return xtx_inv @ meat @ xtx_inv * n / max(n - X.shape[1], 1)


def ts_alpha(
    returns,
    factors: pd.DataFrame,
    model: str = "CAPM",
    *,
    hac_lags: int | None = None,
) -> RegressionFit:
    """Time-series alpha of one return series under a named factor model.

    ``returns`` may be a PortfolioSeries, pandas Series aligned on month,
    or a plain array of the same length as ``factors``.
    """
    if model not in MODEL_FACTORS:
        raise ValueError(f"unknown model {model!r}; choose from {sorted(MODEL_FACTORS)}")
    wanted = MODEL_FACTORS[model]
    missing = [f for f in wanted if f not in factors.columns]
    if missing:
        raise ValueError(f"factor panel missing columns: {missing}")
    y = _align_returns(returns, factors)
    F = factors[list(wanted)].to_numpy(dtype=float)
    X = np.column_stack([np.ones(len(F)), F])
    return _ols(X, y, ["alpha", *wanted], hac_lags=hac_lags)


def _align_returns(returns, factors: pd.DataFrame) -> np.ndarray:
    from .portfolio import PortfolioSeries

    if isinstance(returns, PortfolioSeries):
        series = returns.to_series()
    elif isinstance(returns, pd.Series):
        series = returns
    else:
        arr = np.asarray(returns, dtype=float)
        if arr.size != len(factors):
            raise ValueError("misaligned months between returns and factors")
        return arr
    if not series.index.equals(factors.index):
        joined = series.reindex(factors.index)
        if joined.isna().any():
            raise ValueError("misaligned months between returns and factors")
        series = joined
    return series.to_numpy(dtype=float)


# ---------------------------------------------------------------------------
# Two-pass cross-sectional regressions


def rolling_betas(
    returns_wide: pd.DataFrame,
    factors: pd.DataFrame,
    window: int = 24,
) -> dict[str, pd.DataFrame]:
    """Trailing-window OLS betas for every column of ``returns_wide``.

    The window of length ``window`` ends at the estimation month; betas
    are dated at that month.  Assets with incomplete windows get NaN.
    Returns one wide frame per factor, aligned on the input index.
    """
    if window < len(factors.columns) + 2:
        raise ValueError("window too short to identify the betas")
    if len(returns_wide) != len(factors):
        raise ValueError("misaligned months between returns and factors")
    months = returns_wide.index
    names = list(factors.columns)
    T = len(months)
    out = {f: np.full((T, returns_wide.shape[1]), np.nan) for f in names}
    Y_all = returns_wide.to_numpy(dtype=float)
    F_all = factors.to_numpy(dtype=float)
    for t in range(window - 1, T):
        sl = slice(t - window + 1, t + 1)
        X = np.column_stack([np.ones(window), F_all[sl]])
        Y = Y_all[sl]
        complete = ~np.isnan(Y).any(axis=0)
        if not complete.any():
            continue
        beta, _, _, _ = np.linalg.lstsq(X, Y[:, complete], rcond=None)
        for j, f in enumerate(names):
            out[f][t, complete] = beta[j + 1]
    return {
        f: pd.DataFrame(out[f], index=months, columns=returns_wide.columns) for f in names
    }


@dataclass
class FMResult:
    """Second-pass premia: per-month coefficients and their aggregates."""

    gammas: pd.DataFrame = field(repr=False)
    means: pd.Series
    std_errors: pd.Series
    t_stats: pd.Series
    flagged_months: list[str]
    mean_r_squared_adj: float
    mape: float
    n_months: int


def fm_second_pass(
    portfolio_returns: pd.DataFrame,
    portfolio_betas: Mapping[str, pd.DataFrame],
    portfolio_scores: pd.DataFrame | None = None,
) -> FMResult:
    """Monthly cross-sectional regressions of returns on lagged exposures.

    Each month t regresses the cross-section of portfolio returns on a
    constant, the month t-1 betas, and (optionally) the month t-1 score
    exposure.  Months whose design matrix has a condition number above
    ``COLLINEARITY_LIMIT`` are flagged and reported but still included;
    the flag is the caller's cue to treat those premia with suspicion.
    """
    names = list(portfolio_betas)
    lagged = {f: portfolio_betas[f].shift(1) for f in names}
    lagged_scores = portfolio_scores.shift(1) if portfolio_scores is not None else None
    coef_names = ["constant", *names] + (["score"] if portfolio_scores is not None else [])

    rows = []
    months = []
    flagged: list[str] = []
    r2s = []
    abs_errs = []
    for month in portfolio_returns.index:
        y = portfolio_returns.loc[month].to_numpy(dtype=float)
        cols = [np.ones(y.size)]
        ok = True
        for f in names:
            b = lagged[f].loc[month].to_numpy(dtype=float)
            if np.isnan(b).any():
                ok = False
                break
            cols.append(b)
        if not ok:
            continue
        if lagged_scores is not None:
            s = lagged_scores.loc[month].to_numpy(dtype=float)
            if np.isnan(s).any():
                continue
            cols.append(s)
        X = np.column_stack(cols)
        if np.linalg.cond(X) > COLLINEARITY_LIMIT:
            flagged.append(str(month))
        gamma, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ gamma
        tss = float(((y - y.mean()) ** 2).sum())
        r2 = 1.0 - float(resid @ resid) / tss if tss > 0 else 1.0
        n, k = X.shape
        r2s.append(1.0 - (1.0 - r2) * (n - 1) / max(n - k, 1))
        abs_errs.append(float(np.abs(resid).mean()))
        rows.append(gamma)
        months.append(month)

    if len(rows) < 2:
        raise ValueError("insufficient span: fewer than two cross-sections")
    gammas = pd.DataFrame(rows, index=pd.Index(months, name="month"), columns=coef_names)
    means = gammas.mean()
    se = gammas.std(ddof=1) / math.sqrt(len(gammas))
    if flagged:
        logger.warning("collinear second-pass months flagged: %d", len(flagged))
    return FMResult(
        gammas,
        means,
        se,
        means / se,
        flagged,
        float(np.mean(r2s)),
        float(np.mean(abs_errs)),
        len(gammas),
    )


def aggregate_by_weights(values: pd.DataFrame, weights: pd.DataFrame) -> pd.Series:
    """Portfolio-level aggregate ``sum_i x_i * v_i`` for one month.

    ``values`` is assets in columns; ``weights`` rows are (bin, asset_id,
    weight) for the active quarter.  Returns one value per bin.
    """
    out = {}
    for b, grp in weights.groupby("bin"):
        idx = grp["asset_id"]
        out[b] = float((values[idx].to_numpy() * grp["weight"].to_numpy()).sum())
    return pd.Series(out)


def fama_macbeth(
    panel: pd.DataFrame,
    scores: pd.DataFrame,
    factors: pd.DataFrame,
    model_factors: Sequence[str] = ("Mkt",),
    *,
    include_score: bool = True,
    n_portfolios: int = 20,
    window: int = 24,
    score_kind: str = "overall",
) -> FMResult:
    """Full two-pass procedure on score-sorted portfolios.

    First pass: trailing ``window``-month betas per asset.  Portfolios:
    ``n_portfolios`` score-sorted bins, value weighted.  Exposures are
    aggregated with the same weights as returns (beta and score of a
    portfolio are the weighted means of its members').  Second pass:
    monthly cross-sections of portfolio returns on lagged exposures.
    """
    from .portfolio import month_to_int, quantile_sort, quarter_label, quarter_of

    missing = [f for f in model_factors if f not in factors.columns]
    if missing:
        raise ValueError(f"factor panel missing columns: {missing}")
    sort = quantile_sort(panel, scores, n_bins=n_portfolios, score_kind=score_kind)
    port_returns = pd.concat([b.to_series() for b in sort.bins], axis=1)
    months = port_returns.index

    wide_r = panel.pivot(index="month", columns="asset_id", values="excess_return")
    wide_r = wide_r.reindex(months)
    betas = rolling_betas(wide_r, factors.loc[months, list(model_factors)], window)

    lookup = _firm_score_lookup(scores, score_kind)
    weights_by_quarter = {q: grp for q, grp in sort.constituents.groupby("quarter")}

    port_betas = {f: pd.DataFrame(np.nan, index=months, columns=port_returns.columns)
                  for f in model_factors}
    port_scores = pd.DataFrame(np.nan, index=months, columns=port_returns.columns)
    for month in months:
        q = quarter_label(quarter_of(month_to_int(month)))
        grp = weights_by_quarter.get(q)
        if grp is None:
            continue
        month_end = f"{month}-31"
        for b, sub in grp.groupby("bin"):
            name = f"P{b + 1}"
            total_beta = {f: 0.0 for f in model_factors}
            total_score = 0.0
            total_w = 0.0
            valid = True
            for asset, w in zip(sub["asset_id"], sub["weight"]):
                hit = _latest_at_or_before(lookup.get(asset), month_end)
                if hit is None:
                    valid = False
                    break
                total_score += w * hit
                for f in model_factors:
                    bval = betas[f].at[month, asset]
                    if np.isnan(bval):
                        valid = False
                        break
                    total_beta[f] += w * bval
                if not valid:
                    break
                total_w += w
            if valid and total_w > 0:
                for f in model_factors:
                    port_betas[f].at[month, name] = total_beta[f] / total_w
                port_scores.at[month, name] = total_score / total_w
    return fm_second_pass(
        port_returns, port_betas, port_scores if include_score else None
    )


def _firm_score_lookup(scores: pd.DataFrame, score_kind: str):
    sub = scores[scores["score_kind"] == score_kind]
    return {
        firm: (grp["filing_date"].tolist(), grp["value"].tolist())
        for firm, grp in sub.sort_values(["firm_id", "filing_date"]).groupby("firm_id")
    }


def _latest_at_or_before(entry, cutoff: str):
    if entry is None:
        return None
    import bisect

    dates, values = entry
    pos = bisect.bisect_right(dates, cutoff)
    if pos == 0:
        return None
    return values[pos - 1]


# ---------------------------------------------------------------------------
# Joint alpha test


@dataclass
class GRSResult:
    statistic: float
    p_value: float
    n_assets: int
    n_factors: int
    n_months: int
    mean_r_squared: float


def grs_test(portfolio_returns: pd.DataFrame, factors: pd.DataFrame) -> GRSResult:
    """Finite-sample joint test that all time-series alphas are zero.

    Uses maximum-likelihood (divide by T) covariance estimates for both
    the residuals and the factors; under the null the statistic follows
    F(N, T - N - K).
    """
    Y = np.asarray(portfolio_returns, dtype=float)
    F = np.asarray(factors, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    T, N = Y.shape
    K = F.shape[1]
    if len(F) != T:
        raise ValueError("misaligned months between portfolios and factors")
    if T <= N + K:
        raise ValueError(f"insufficient span: T={T} must exceed N+K={N + K}")

    X = np.column_stack([np.ones(T), F])
    B, _, _, _ = np.linalg.lstsq(X, Y, rcond=None)
    alphas = B[0]
    E = Y - X @ B
    sigma = E.T @ E / T
    mu = F.mean(axis=0)
    Fc = F - mu
    omega = Fc.T @ Fc / T
    try:
        alpha_term = float(alphas @ np.linalg.solve(sigma, alphas))
        sharpe_term = float(mu @ np.linalg.solve(omega, mu))
    except np.linalg.LinAlgError as exc:
        raise ValueError("nonpositive-definite covariance in joint alpha test") from exc
    stat = (T - N - K) / N * alpha_term / (1.0 + sharpe_term)
    p_value = float(stats.f.sf(stat, N, T - N - K))
    tss = ((Y - Y.mean(axis=0)) ** 2).sum(axis=0)
    ssr = (E ** 2).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r2 = np.where(tss > 0, 1.0 - ssr / tss, 1.0)
    return GRSResult(float(stat), p_value, N, K, T, float(r2.mean()))


# ---------------------------------------------------------------------------
# Bayesian factor-subset comparison


def _chol_logdet(A: np.ndarray, what: str) -> float:
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"nonpositive-definite cross-product in {what}") from exc
    return 2.0 * float(np.log(np.diag(L)).sum())


def bs_marginal_likelihood(
    included: np.ndarray,
    excluded: np.ndarray,
    market: np.ndarray,
    *,
    prior_multiple: float = 1.25,
    k_mode: str = "original",
) -> float:
    """Log marginal likelihood of a factor subset given the market.

    Two blocks multiply together.  The unrestricted block regresses the
    included factors on the market with an intercept and carries the
    prior adjustment term Q; the restricted block regresses the excluded
    factors on the market plus the included factors without an intercept.
    Determinants enter through triangular factorisations in log space.

    ``prior_multiple`` scales the attainable squared Sharpe ratio and
    must exceed 1.  ``k_mode`` selects the sign convention of the prior
    weight k: "as-printed" uses (1 - prior^2), which is negative, while
    "original" (the default) uses (prior^2 - 1).
    """
    if prior_multiple <= 1.0:
        raise ValueError("prior multiple must exceed 1")
    if k_mode not in ("original", "as-printed"):
        raise ValueError(f"unknown k_mode {k_mode!r}")
    market = np.asarray(market, dtype=float).reshape(-1)
    T = market.size
    included = _factor_block(included, T)
    excluded = _factor_block(excluded, T)
    n_inc = included.shape[1]
    n_exc = excluded.shape[1]

    log_ml = 0.0
    if n_inc > 0:
        K = 1
        if T <= K + n_inc + 1:
            raise ValueError("insufficient span for the unrestricted block")
        X = np.column_stack([np.ones(T), market])
        B, _, _, _ = np.linalg.lstsq(X, included, rcond=None)
        E = included - X @ B
        S = E.T @ E
        mu = market.mean()
        omega = float(((market - mu) ** 2).mean())
        # Relative guard: an exactly-constant market leaves omega at
        # rounding-noise scale rather than zero.
        if omega <= 1e-12 * mu * mu:
            raise ValueError("market factor has zero variance")
        sh2 = mu * mu / omega
        a = (1.0 + sh2) / T
        if k_mode == "original":
            k = sh2 / n_inc * (prior_multiple ** 2 - 1.0)
        else:
            k = sh2 / n_inc * (1.0 - prior_multiple ** 2)
        sigma = S / T
        alphas = B[0]
        try:
            w_stat = T * float(alphas @ np.linalg.solve(sigma, alphas)) / (1.0 + sh2)
        except np.linalg.LinAlgError as exc:
            raise ValueError("nonpositive-definite cross-product in unrestricted block") from exc
        if a + k <= 0.0:
            raise ValueError(f"prior weight degenerate under k_mode={k_mode!r}")
        q_arg1 = 1.0 + (a / (a + k)) * (w_stat / T)
        q_arg2 = 1.0 + k / a
        if q_arg1 <= 0.0 or q_arg2 <= 0.0:
            raise ValueError(f"prior adjustment undefined under k_mode={k_mode!r}")
        log_q = -(T - K) / 2.0 * math.log(q_arg1) - n_inc / 2.0 * math.log(q_arg2)
        xtx = float(market @ market)
        log_ml += -n_inc / 2.0 * math.log(xtx) - (T - K) / 2.0 * _chol_logdet(
            S, "unrestricted block"
        ) + log_q

    if n_exc > 0:
        X = np.column_stack([market, included]) if n_inc else market[:, None]
        K_r = X.shape[1]
        if T <= K_r + n_exc:
            raise ValueError("insufficient span for the restricted block")
        B, _, _, _ = np.linalg.lstsq(X, excluded, rcond=None)
        E = excluded - X @ B
        S_r = E.T @ E
        log_ml += -n_exc / 2.0 * _chol_logdet(X.T @ X, "restricted design")
        log_ml += -(T - K_r) / 2.0 * _chol_logdet(S_r, "restricted block")
    return log_ml


def _factor_block(block, T: int) -> np.ndarray:
    if block is None:
        return np.empty((T, 0))
    arr = np.asarray(block, dtype=float)
    if arr.size == 0:
        return np.empty((T, 0))
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] != T:
        raise ValueError("misaligned months between factor blocks")
    return arr


@dataclass
class ModelPosterior:
    """Posterior model probabilities over factor subsets."""

    subset_ids: list[str]
    probabilities: pd.Series
    path: pd.DataFrame | None = None
    factor_path: pd.DataFrame | None = None


def _subset_id(subset: tuple[str, ...], market_col: str) -> str:
    return "+".join([market_col, *subset]) if subset else market_col


def bs_posteriors(
    factors: pd.DataFrame,
    candidates: Sequence[str],
    *,
    market_col: str = "Mkt",
    prior_multiple: float = 1.25,
    k_mode: str = "original",
    expanding: bool = False,
    min_months: int = 60,
) -> ModelPosterior:
    """Posterior probability of every factor subset, market always included.

    Equal prior probabilities over the power set of ``candidates``;
    posteriors are normalised in log space.  With ``expanding`` the
    posterior is recomputed each month on the growing sample starting at
    ``min_months``, and a per-factor cumulative path (the summed
    probability of subsets containing each factor) is emitted alongside.
    """
    candidates = list(candidates)
    if len(candidates) > 8:
        raise ValueError("at most 8 candidate factors are supported")
    if market_col not in factors.columns:
        raise ValueError(f"market column {market_col!r} missing")
    missing = [c for c in candidates if c not in factors.columns]
    if missing:
        raise ValueError(f"candidate columns missing: {missing}")
    logger.info(
        "factor-subset comparison: prior=%s k_mode=%s candidates=%s",
        prior_multiple, k_mode, candidates,
    )

    subsets: list[tuple[str, ...]] = []
    for size in range(len(candidates) + 1):
        subsets.extend(combinations(candidates, size))
    ids = [_subset_id(s, market_col) for s in subsets]

    def window_probs(frame: pd.DataFrame) -> np.ndarray:
        market = frame[market_col].to_numpy(dtype=float)
        log_mls = np.full(len(subsets), -np.inf)
        for j, subset in enumerate(subsets):
            rest = [c for c in candidates if c not in subset]
            try:
                log_mls[j] = bs_marginal_likelihood(
                    frame[list(subset)].to_numpy(dtype=float),
                    frame[rest].to_numpy(dtype=float),
                    market,
                    prior_multiple=prior_multiple,
                    k_mode=k_mode,
                )
            except ValueError:
                continue
        peak = log_mls.max()
        if not np.isfinite(peak):
            raise ValueError("all marginal likelihoods vanished")
        weights = np.exp(log_mls - peak)
        return weights / weights.sum()

    final = window_probs(factors)
    probabilities = pd.Series(final, index=pd.Index(ids, name="subset_id"))

    path = None
    factor_path = None
    if expanding:
        if min_months < 2:
            raise ValueError("min_months must be at least 2")
        path_rows = []
        factor_rows = []
        months = list(factors.index)
        for t in range(min_months, len(months) + 1):
            probs = window_probs(factors.iloc[:t])
            month = months[t - 1]
            for sid, p in zip(ids, probs):
                path_rows.append((month, sid, float(p)))
            for factor in candidates:
                cum = sum(
                    p for s, p in zip(subsets, probs) if factor in s
                )
                factor_rows.append((month, factor, float(cum)))
        path = pd.DataFrame(path_rows, columns=["month", "subset_id", "probability"])
        factor_path = pd.DataFrame(factor_rows, columns=["month", "factor", "probability"])
    return ModelPosterior(ids, probabilities, path, factor_path)


# ---------------------------------------------------------------------------
# Panel fixed-effects determinants


@dataclass
class FEResult:
    """Within-estimator output with clustered and plain standard errors."""

    params: pd.Series
    std_errors: pd.Series
    t_stats: pd.Series
    std_errors_ols: pd.Series
    r_squared_within: float
    nobs: int
    n_clusters: int
    dropped: list[str]


def fe_determinants(
    frame: pd.DataFrame,
    y_col: str,
    x_cols: Sequence[str],
    *,
    fixed_effects: Sequence[str] = ("firm", "year"),
    cluster_col: str = "firm",
) -> FEResult:
    """Two-way fixed-effects regression with firm-clustered standard errors.

    The within transformation demeans y and X over each fixed-effect
    group, iterating until the group means vanish; regressors absorbed by
    the fixed effects (constant within every group) are dropped with a
    warning.  Clustered standard errors use the plain sandwich with a
    G/(G-1) small-sample factor.
    """
    for col in [y_col, *x_cols, *fixed_effects, cluster_col]:
        if col not in frame.columns:
            raise ValueError(f"panel missing column {col!r}")
    data = frame[[y_col, *x_cols]].to_numpy(dtype=float).copy()
    group_codes = [pd.factorize(frame[fe])[0] for fe in fixed_effects]

    for _ in range(200):
        before = data.copy()
        for codes in group_codes:
            n_groups = codes.max() + 1
            sums = np.zeros((n_groups, data.shape[1]))
            np.add.at(sums, codes, data)
            counts = np.bincount(codes, minlength=n_groups)[:, None]
            data -= (sums / counts)[codes]
        if np.max(np.abs(data - before)) < 1e-12:
            break

    y = data[:, 0]
    X = data[:, 1:]
    keep = []
    dropped = []
    for j, name in enumerate(x_cols):
        if np.std(X[:, j]) < 1e-12:
            dropped.append(name)
            warnings.warn(f"regressor {name!r} absorbed by fixed effects; dropped")
        else:
            keep.append(j)
    if not keep:
        raise ValueError("all regressors absorbed by the fixed effects")
    X = X[:, keep]
    names = [x_cols[j] for j in keep]

    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    xtx_inv = np.linalg.inv(X.T @ X)

    clusters = pd.factorize(frame[cluster_col])[0]
    n_clusters = clusters.max() + 1
    meat = np.zeros((X.shape[1], X.shape[1]))
    for g in range(n_clusters):
        members = clusters == g
        s = X[members].T @ resid[members]
        meat += np.outer(s, s)
    cov_cl = xtx_inv @ meat @ xtx_inv * n_clusters / max(n_clusters - 1, 1)
    se_cl = np.sqrt(np.clip(np.diag(cov_cl), 0.0, None))

    dof = max(len(y) - X.shape[1], 1)
    sigma2 = float(resid @ resid) / dof
    se_ols = np.sqrt(np.clip(np.diag(xtx_inv) * sigma2, 0.0, None))

    tss = float(y @ y)
    r2_within = 1.0 - float(resid @ resid) / tss if tss > 0 else 1.0
    idx = pd.Index(names)
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = np.where(se_cl > 0, beta / np.where(se_cl > 0, se_cl, 1.0), np.inf)
    return FEResult(
        pd.Series(beta, index=idx),
        pd.Series(se_cl, index=idx),
        pd.Series(tvals, index=idx),
        pd.Series(se_ols, index=idx),
        r2_within,
        len(y),
        int(n_clusters),
        dropped,
    )
