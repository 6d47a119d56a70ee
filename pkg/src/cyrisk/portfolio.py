"""Score-sorted portfolios with quarterly rebalancing.

Firms are ranked each quarter on their most recent score dated strictly
before the quarter start and split into quantile bins; weights within a
bin are proportional to market cap at the prior quarter end.  Monthly bin
returns renormalise over the constituents that still have a return that
month, so a delisting firm contributes its final partial month and then
drops out.  A long-short series takes the top bin minus the bottom bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .score import validate_score_panel

RETURN_COLUMNS = ["asset_id", "month", "excess_return", "market_cap"]


def month_to_int(month: str) -> int:
    """\"YYYY-MM\" to a serial month number."""
    year, mon = month.split("-")
    return int(year) * 12 + int(mon) - 1


def int_to_month(serial: int) -> str:
    return f"{serial // 12:04d}-{serial % 12 + 1:02d}"


def quarter_of(serial: int) -> int:
    return serial // 3


def quarter_label(quarter: int) -> str:
    return f"{quarter * 3 // 12:04d}Q{(quarter * 3 % 12) // 3 + 1}"


def quarter_start_date(quarter: int) -> str:
    """ISO date of the first day of a quarter, for strict lag comparisons."""
    return f"{int_to_month(quarter * 3)}-01"


@dataclass
class PortfolioSeries:
    """A monthly return series for one portfolio."""

    name: str
    months: list[str]
    returns: np.ndarray

    def __post_init__(self) -> None:
        self.returns = np.asarray(self.returns, dtype=float)
        if len(self.months) != self.returns.size:
            raise ValueError("months and returns must align")

    def to_series(self) -> pd.Series:
        return pd.Series(self.returns, index=pd.Index(self.months, name="month"),
                         name=self.name)


@dataclass
class SortResult:
    """Quantile sort output: one series per bin plus the membership table."""

    bins: list[PortfolioSeries]
    constituents: pd.DataFrame = field(repr=False)

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    def spread(self) -> PortfolioSeries:
        return long_short(self.bins[-1], self.bins[0])


def validate_returns_panel(panel: pd.DataFrame) -> pd.DataFrame:
    missing = [c for c in RETURN_COLUMNS if c not in panel.columns]
    if missing:
        raise ValueError(f"returns panel missing columns: {missing}")
    dupes = panel.duplicated(subset=["asset_id", "month"])
    if dupes.any():
        offender = panel[dupes].iloc[0]
        raise ValueError(f"duplicate return row for {offender.asset_id} {offender.month}")
    return panel


def _score_lookup(scores: pd.DataFrame, score_kind: str):
    """Per-firm arrays of (filing_date, value) sorted by date."""
    sub = scores[scores["score_kind"] == score_kind]
    if sub.empty:
        raise ValueError(f"no scores of kind {score_kind!r}")
    lookup: dict[str, tuple[list[str], list[float]]] = {}
    for firm_id, grp in sub.sort_values(["firm_id", "filing_date"]).groupby("firm_id"):
        lookup[firm_id] = (grp["filing_date"].tolist(), grp["value"].tolist())
    return lookup


def latest_before(dates: list[str], values: list[float], cutoff: str):
    """Most recent (date, value) strictly before ``cutoff``, or None."""
    import bisect

    pos = bisect.bisect_left(dates, cutoff)
    if pos == 0:
        return None
    return dates[pos - 1], values[pos - 1]


def _tie_aware_bins(sorted_scores: np.ndarray, n_bins: int) -> np.ndarray:
    """Equal-split rank bins, then pull boundary ties into the lower bin."""
    n = sorted_scores.size
    bins = (np.arange(n) * n_bins) // n
    for b in range(1, n_bins):
        starts = np.where(bins == b)[0]
        if starts.size == 0:
            continue
        first = starts[0]
        boundary = sorted_scores[first - 1] if first > 0 else None
        while first < n and bins[first] == b and sorted_scores[first] == boundary:
            bins[first] = b - 1
            first += 1
    return bins


def quantile_sort(
    panel: pd.DataFrame,
    scores: pd.DataFrame,
    *,
    n_bins: int = 5,
    score_kind: str = "overall",
    monthly_weights: bool = False,
) -> SortResult:
    """Quarterly-rebalanced quantile sort on lagged scores.

    Parameters
    ----------
    panel : returns panel (asset_id, month, excess_return, market_cap)
    scores : score panel (firm_id, filing_date, score_kind, value)
    n_bins : number of quantile portfolios
    score_kind : which score to sort on
    monthly_weights : reweight by the previous month's cap instead of the
        prior quarter end (membership still changes only quarterly)

    Raises
    ------
    ValueError
        "degenerate sort" when a quarter leaves any bin empty, including
        the constant-score case where ties collapse into the bottom bin.
    """
    validate_returns_panel(panel)
    validate_score_panel(scores)
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    lookup = _score_lookup(scores, score_kind)

    wide_r = panel.pivot(index="month", columns="asset_id", values="excess_return").sort_index()
    wide_cap = panel.pivot(index="month", columns="asset_id", values="market_cap").sort_index()
    months = list(wide_r.index)
    serials = [month_to_int(m) for m in months]
    quarters = sorted(set(quarter_of(s) for s in serials))

    bin_months: list[str] = []
    bin_returns: list[list[float]] = [[] for _ in range(n_bins)]
    constituent_rows = []

    skipped = 0
    for quarter in quarters:
        cutoff = quarter_start_date(quarter)
        prior_month = int_to_month(quarter * 3 - 1)
        if prior_month not in wide_cap.index:
            # Warm-up quarter: no prior-quarter-end caps exist yet.
            skipped += 1
            continue
        caps = wide_cap.loc[prior_month]

        eligible = []
        for asset in wide_r.columns:
            if asset not in lookup:
                continue
            hit = latest_before(*lookup[asset], cutoff)
            if hit is None:
                continue
            if not np.isfinite(caps.get(asset, np.nan)):
                continue
            score_date, score_value = hit
            eligible.append((score_value, asset, score_date, float(caps[asset])))
        if not eligible:
            skipped += 1
            continue
        if len(eligible) < n_bins:
            raise ValueError(f"degenerate sort: {len(eligible)} eligible firms in {quarter_label(quarter)}")

        eligible.sort(key=lambda row: (row[0], row[1]))
        sorted_scores = np.array([row[0] for row in eligible])
        bins = _tie_aware_bins(sorted_scores, n_bins)
        if np.unique(bins).size < n_bins:
            raise ValueError(f"degenerate sort: empty bin in {quarter_label(quarter)}")

        members: list[list[tuple[str, float]]] = [[] for _ in range(n_bins)]
        for (score_value, asset, score_date, cap), b in zip(eligible, bins):
            members[b].append((asset, cap))
            constituent_rows.append(
                (quarter_label(quarter), b, asset, cap, score_date, score_value)
            )

        quarter_months = [m for m, s in zip(months, serials) if quarter_of(s) == quarter]
        for month in quarter_months:
            row = wide_r.loc[month]
            if monthly_weights:
                prev = int_to_month(month_to_int(month) - 1)
                month_caps = wide_cap.loc[prev] if prev in wide_cap.index else None
            for b in range(n_bins):
                weights = []
                rets = []
                for asset, cap in members[b]:
                    r = row.get(asset, np.nan)
                    if not np.isfinite(r):
                        continue
                    w = cap
                    if monthly_weights and month_caps is not None:
                        alt = month_caps.get(asset, np.nan)
                        if np.isfinite(alt):
                            w = float(alt)
                    weights.append(w)
                    rets.append(float(r))
                total = sum(weights)
                if not weights or total <= 0.0:
                    raise ValueError(f"degenerate sort: bin {b + 1} empty in {month}")
                bin_returns[b].append(sum(w * r for w, r in zip(weights, rets)) / total)
            bin_months.append(month)

    # Normalise stored weights to sum to one within each quarter/bin.
    constituents = pd.DataFrame(
        constituent_rows,
        columns=["quarter", "bin", "asset_id", "weight", "score_date", "score"],
    )
    totals = constituents.groupby(["quarter", "bin"])["weight"].transform("sum")
    constituents["weight"] = constituents["weight"] / totals

    if not bin_months:
        raise ValueError("degenerate sort: no quarter has both scores and prior caps")
    bins_out = [
        PortfolioSeries(f"P{b + 1}", bin_months, np.array(bin_returns[b]))
        for b in range(n_bins)
    ]
    return SortResult(bins_out, constituents)


def long_short(top: PortfolioSeries, bottom: PortfolioSeries) -> PortfolioSeries:
    """Top-minus-bottom spread; the two series must cover identical months."""
    if top.months != bottom.months:
        raise ValueError("misaligned months between long and short legs")
    return PortfolioSeries(
        f"{top.name}-{bottom.name}", list(top.months), top.returns - bottom.returns
    )


def sharpe(series: PortfolioSeries | Sequence[float]) -> float:
    """Annualised Sharpe ratio of a monthly series: mean*12 / (std*sqrt(12))."""
    returns = series.returns if isinstance(series, PortfolioSeries) else np.asarray(series, float)
    if returns.size < 12:
        raise ValueError("insufficient span: need at least 12 months")
    std = returns.std(ddof=1)
    if std == 0.0:
        raise ValueError("zero volatility")
    return float(returns.mean() * 12.0 / (std * math.sqrt(12.0)))


@dataclass
class DoubleSortResult:
    """Mean monthly return per (characteristic, score) cell plus row flags."""

    cell_means: np.ndarray
    flagged_rows: list[int]
    n_outer: int
    n_inner: int


def double_sort(
    panel: pd.DataFrame,
    scores: pd.DataFrame,
    characteristic: str,
    *,
    n_outer: int = 5,
    n_inner: int = 5,
    score_kind: str = "overall",
    tolerance: float = 0.0003,
) -> DoubleSortResult:
    """Conditional double sort: characteristic quintiles, then score quintiles.

    Within each outer bin, firms are re-sorted on the lagged score; cell
    returns are value-weighted monthly and averaged over time.  An outer
    row is flagged when its cell means decrease along the score axis by
    more than ``tolerance`` (0.03 percentage points by default).
    """
    validate_returns_panel(panel)
    if characteristic not in panel.columns:
        raise ValueError(f"characteristic column {characteristic!r} missing")
    lookup = _score_lookup(scores, score_kind)

    wide_r = panel.pivot(index="month", columns="asset_id", values="excess_return").sort_index()
    wide_cap = panel.pivot(index="month", columns="asset_id", values="market_cap").sort_index()
    wide_char = panel.pivot(index="month", columns="asset_id", values=characteristic).sort_index()
    months = list(wide_r.index)
    serials = [month_to_int(m) for m in months]
    quarters = sorted(set(quarter_of(s) for s in serials))

    sums = np.zeros((n_outer, n_inner))
    counts = np.zeros((n_outer, n_inner))

    for quarter in quarters:
        cutoff = quarter_start_date(quarter)
        prior_month = int_to_month(quarter * 3 - 1)
        if prior_month not in wide_cap.index:
            continue
        caps = wide_cap.loc[prior_month]
        chars = wide_char.loc[prior_month]

        eligible = []
        for asset in wide_r.columns:
            if asset not in lookup:
                continue
            hit = latest_before(*lookup[asset], cutoff)
            if hit is None or not np.isfinite(caps.get(asset, np.nan)):
                continue
            if not np.isfinite(chars.get(asset, np.nan)):
                continue
            eligible.append((float(chars[asset]), asset, hit[1], float(caps[asset])))
        if not eligible:
            continue
        if len(eligible) < n_outer * n_inner:
            raise ValueError(f"degenerate sort: too few firms in {quarter_label(quarter)}")

        eligible.sort(key=lambda row: (row[0], row[1]))
        outer_bins = _tie_aware_bins(np.array([r[0] for r in eligible]), n_outer)

        cells: dict[tuple[int, int], list[tuple[str, float]]] = {}
        for outer in range(n_outer):
            group = [row for row, b in zip(eligible, outer_bins) if b == outer]
            if not group:
                raise ValueError(f"degenerate sort: empty outer bin in {quarter_label(quarter)}")
            group.sort(key=lambda row: (row[2], row[1]))
            inner_bins = _tie_aware_bins(np.array([r[2] for r in group]), n_inner)
            for (char_value, asset, score_value, cap), inner in zip(group, inner_bins):
                cells.setdefault((outer, inner), []).append((asset, cap))

        quarter_months = [m for m, s in zip(months, serials) if quarter_of(s) == quarter]
        for month in quarter_months:
            row = wide_r.loc[month]
            for outer in range(n_outer):
                for inner in range(n_inner):
                    members = cells.get((outer, inner), [])
                    pairs = [
                        (cap, float(row[asset]))
                        for asset, cap in members
                        if np.isfinite(row.get(asset, np.nan))
                    ]
                    if not pairs:
                        raise ValueError(
                            f"degenerate sort: empty cell ({outer + 1},{inner + 1}) in {month}"
                        )
                    total = sum(c for c, _ in pairs)
                    sums[outer, inner] += sum(c * r for c, r in pairs) / total
                    counts[outer, inner] += 1

    if counts.sum() == 0:
        raise ValueError("degenerate sort: no quarter has both scores and prior caps")
    means = sums / counts
    flagged = []
    for outer in range(n_outer):
        steps = np.diff(means[outer])
        if np.any(steps < -tolerance):
            flagged.append(outer)
    return DoubleSortResult(means, flagged, n_outer, n_inner)
