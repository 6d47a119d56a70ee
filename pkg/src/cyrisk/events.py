"""Market-model event studies and two-sample mean comparisons.

Abnormal returns are daily returns minus a market-model fit estimated on
a trading-day span that ends strictly before the earliest event-window
day.  Cumulative abnormal returns are summed over each window and tested
with t = CAR / (sigma_AR * sqrt(L)), where sigma_AR is the estimation
residual standard deviation.  Welch's unequal-variance t-test handles the
series-vs-series comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats


@dataclass(frozen=True)
class EventWindowResult:
    window: tuple[int, int]
    car: float
    t_stat: float
    n_days: int
    sigma_ar: float


def car(
    asset_returns: pd.Series,
    market_returns: pd.Series,
    event_date: str,
    windows: Sequence[tuple[int, int]] = ((-1, 1), (-1, 3)),
    estimation_days: int = 252,
) -> list[EventWindowResult]:
    """Cumulative abnormal returns around one event.

    Parameters
    ----------
    asset_returns, market_returns : pd.Series
        Daily returns indexed by ISO date strings.  The market index
        defines the trading calendar.
    event_date : str
        Must be a trading day; if the true event fell on a non-trading
        day the caller must resolve t=0 before calling.
    windows : sequence of (start, end)
        Offsets in trading days relative to t=0, inclusive.
    estimation_days : int
        Length of the market-model estimation span, which ends strictly
        before the earliest window day.
    """
    market = market_returns.sort_index()
    calendar = list(market.index)
    if event_date not in market.index:
        raise ValueError(
            f"event date {event_date} is not a trading day; resolve t=0 explicitly"
        )
    if estimation_days < 10:
        raise ValueError("estimation span too short")
    for start, end in windows:
        if start > end:
            raise ValueError(f"bad window ({start}, {end})")

    t0 = calendar.index(event_date)
    earliest = min(start for start, _ in windows)
    latest = max(end for _, end in windows)
    est_end = t0 + earliest  # exclusive
    est_start = est_end - estimation_days
    if est_start < 0:
        raise ValueError("insufficient history before the event window")
    if t0 + latest >= len(calendar):
        raise ValueError("event window runs past the end of the calendar")

    est_dates = calendar[est_start:est_end]
    aligned = asset_returns.reindex(market.index)
    est_y = aligned.loc[est_dates]
    if est_y.isna().any():
        raise ValueError("asset returns missing inside the estimation span")
    est_m = market.loc[est_dates].to_numpy(dtype=float)
    y = est_y.to_numpy(dtype=float)

    X = np.column_stack([np.ones(est_m.size), est_m])
    (intercept, slope), _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - intercept - slope * est_m
    dof = est_m.size - 2
    sigma_ar = math.sqrt(float(resid @ resid) / dof)

    results = []
    for start, end in windows:
        dates = calendar[t0 + start : t0 + end + 1]
        win_y = aligned.loc[dates]
        if win_y.isna().any():
            raise ValueError("asset returns missing inside the event window")
        win_m = market.loc[dates].to_numpy(dtype=float)
        abnormal = win_y.to_numpy(dtype=float) - intercept - slope * win_m
        total = float(abnormal.sum())
        length = end - start + 1
        t_stat = total / (sigma_ar * math.sqrt(length)) if sigma_ar > 0 else (
            0.0 if total == 0.0 else math.inf * np.sign(total)
        )
        results.append(EventWindowResult((start, end), total, float(t_stat), length, sigma_ar))
    return results


@dataclass(frozen=True)
class WelchResult:
    t_stat: float
    p_value: float
    dof: float
    mean_a: float
    mean_b: float
    n_a: int
    n_b: int


def welch_test(a, b) -> WelchResult:
    """Welch's unequal-variance t-test for a difference in means.

    Degrees of freedom follow the Welch-Satterthwaite approximation; the
    p-value is two-sided.  Two constant, equal series have no sampling
    variance to test against and are rejected.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.size < 2 or y.size < 2:
        raise ValueError("each sample needs at least two observations")
    var_x = x.var(ddof=1)
    var_y = y.var(ddof=1)
    vx = var_x / x.size
    vy = var_y / y.size
    denom = vx + vy
    if denom == 0.0:
        raise ValueError("zero variance in both samples")
    t_stat = (x.mean() - y.mean()) / math.sqrt(denom)
    # The Satterthwaite ratio is scale invariant; normalising by the
    # larger term keeps tiny variances from underflowing it into 0/0.
    s = max(vx, vy)
    rx, ry = vx / s, vy / s
    dof = (rx + ry) ** 2 / (rx ** 2 / (x.size - 1) + ry ** 2 / (y.size - 1))
    p_value = 2.0 * float(stats.t.sf(abs(t_stat), dof))
    return WelchResult(
        float(t_stat), p_value, float(dof),
        float(x.mean()), float(y.mean()), int(x.size), int(y.size),
    )
