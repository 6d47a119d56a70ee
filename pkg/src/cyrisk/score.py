"""Firm-level cyber scores from paragraph embeddings.

For each filing paragraph the score of interest is its maximum cosine
similarity against a knowledgebase subset; the filing-level score averages
the top fraction of those maxima (a small lower tail is trimmed).  The
sentiment variant first zeroes paragraphs that share no token with a
risk-word dictionary.  Scores for the full knowledgebase, per tactic, per
super-tactic and the sentiment gate are emitted side by side.
"""

from __future__ import annotations

import logging
import math
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .textprep import load_word_list

logger = logging.getLogger(__name__)

SCORE_KIND_OVERALL = "overall"
SCORE_KIND_SENTIMENT = "sentiment"


def load_risk_words() -> frozenset[str]:
    """The packaged risk/uncertainty dictionary used for sentiment gating."""
    with resources.as_file(resources.files("cyrisk.data") / "risk_words.txt") as path:
        return load_word_list(path)


def _matrix(vectors) -> np.ndarray:
    from .cluster import _as_matrix

    return _as_matrix(vectors)


def paragraph_maxima(filing_vectors, kb_vectors) -> np.ndarray:
    """Per filing paragraph, the max cosine against a knowledgebase subset."""
    filing = _matrix(filing_vectors)
    kb = _matrix(kb_vectors)
    if filing.shape[0] == 0:
        raise ValueError("empty filing: no paragraph vectors")
    if kb.shape[0] == 0:
        raise ValueError("empty kb_subset")
    if filing.shape[1] != kb.shape[1]:
        raise ValueError("dimension mismatch between filing and knowledgebase")
    norms_f = np.linalg.norm(filing, axis=1, keepdims=True)
    norms_k = np.linalg.norm(kb, axis=1, keepdims=True)
    if np.any(norms_f == 0.0) or np.any(norms_k == 0.0):
        raise ValueError("undefined angle: zero vector")
    sims = (filing / norms_f) @ (kb / norms_k).T
    return np.clip(sims, -1.0, 1.0).max(axis=1)


def cyber_score(maxima, trim: float = 0.99) -> float:
    """Mean of the top ``ceil(trim * n)`` values of ``maxima``.

    Sorting is descending, so the trim drops the smallest maxima: one
    outlier paragraph cannot be discarded, only the weakest tail.
    """
    values = np.asarray(maxima, dtype=float)
    if values.size == 0:
        raise ValueError("empty maxima")
    if not 0.0 < trim <= 1.0:
        raise ValueError("trim must lie in (0, 1]")
    keep = math.ceil(trim * values.size)
    top = np.sort(values)[::-1][:keep]
    return float(top.mean())


def sentiment_maxima(
    paragraph_tokens: Sequence[Sequence[str]],
    filing_vectors,
    kb_vectors,
    risk_words: frozenset[str],
) -> np.ndarray:
    """Paragraph maxima gated to zero when no risk word appears."""
    if not risk_words:
        raise ValueError("empty risk dictionary")
    maxima = paragraph_maxima(filing_vectors, kb_vectors)
    if len(paragraph_tokens) != maxima.size:
        raise ValueError("one token sequence per paragraph vector required")
    gate = np.array(
        [1.0 if set(tokens) & risk_words else 0.0 for tokens in paragraph_tokens]
    )
    return maxima * gate


def score_filing(
    paragraph_tokens: Sequence[Sequence[str]],
    filing_vectors,
    kb_vectors,
    kb_tactics: Sequence[str],
    super_map: Mapping[str, str],
    risk_words: frozenset[str],
    trim: float = 0.99,
) -> dict[str, float]:
    """All score kinds for one filing.

    Parameters
    ----------
    paragraph_tokens : token sequences aligned with ``filing_vectors``
    filing_vectors, kb_vectors : paragraph embeddings
    kb_tactics : one tactic label per knowledgebase vector
    super_map : tactic name -> super-tactic name
    risk_words : dictionary for the sentiment gate
    trim : fraction of maxima retained

    Returns
    -------
    dict
        ``overall``, one entry per tactic, one per super-tactic, and
        ``sentiment``, in that order.
    """
    kb = _matrix(kb_vectors)
    if len(kb_tactics) != kb.shape[0]:
        raise ValueError("one tactic label per knowledgebase vector required")
    missing = sorted(set(kb_tactics) - set(super_map))
    if missing:
        raise ValueError(f"super_map does not cover tactics: {missing}")

    tactics = sorted(set(kb_tactics))
    kb_tactics = list(kb_tactics)
    scores: dict[str, float] = {}
    scores[SCORE_KIND_OVERALL] = cyber_score(paragraph_maxima(filing_vectors, kb), trim)
    for tactic in tactics:
        idx = [i for i, t in enumerate(kb_tactics) if t == tactic]
        scores[tactic] = cyber_score(paragraph_maxima(filing_vectors, kb[idx]), trim)
    supers: dict[str, list[int]] = {}
    for i, tactic in enumerate(kb_tactics):
        supers.setdefault(super_map[tactic], []).append(i)
    for name in sorted(supers):
        scores[name] = cyber_score(paragraph_maxima(filing_vectors, kb[supers[name]]), trim)
    scores[SCORE_KIND_SENTIMENT] = cyber_score(
        sentiment_maxima(paragraph_tokens, filing_vectors, kb, risk_words), trim
    )
    return scores


def build_score_panel(records: Iterable[tuple[str, str, dict[str, float]]]) -> pd.DataFrame:
    """Assemble per-filing score dicts into a long panel.

    ``records`` yields (firm_id, filing_date, scores).  A repeated
    (firm_id, filing_date) pair is rejected: the same filing scored twice
    indicates an upstream bookkeeping bug.
    """
    rows = []
    seen: set[tuple[str, str]] = set()
    for firm_id, filing_date, scores in records:
        key = (firm_id, filing_date)
        if key in seen:
            raise ValueError(f"duplicate filing for {firm_id} on {filing_date}")
        seen.add(key)
        for kind, value in scores.items():
            rows.append((firm_id, filing_date, kind, float(value)))
    panel = pd.DataFrame(rows, columns=["firm_id", "filing_date", "score_kind", "value"])
    return panel


def validate_score_panel(panel: pd.DataFrame) -> pd.DataFrame:
    """Check panel shape and key uniqueness; returns the panel unchanged."""
    required = ["firm_id", "filing_date", "score_kind", "value"]
    missing = [c for c in required if c not in panel.columns]
    if missing:
        raise ValueError(f"score panel missing columns: {missing}")
    dupes = panel.duplicated(subset=["firm_id", "filing_date", "score_kind"])
    if dupes.any():
        offender = panel[dupes].iloc[0]
        raise ValueError(
            f"duplicate filing score for {offender.firm_id} on {offender.filing_date}"
        )
    return panel


def aggregate_yearly(
    panel: pd.DataFrame, percentiles: Sequence[int] = (25, 50, 75)
) -> pd.DataFrame:
    """Cross-firm mean and percentiles of each score kind by calendar year."""
    validate_score_panel(panel)
    work = panel.copy()
    work["year"] = work["filing_date"].str[:4]
    grouped = work.groupby(["year", "score_kind"], sort=True)["value"]
    out = grouped.mean().rename("mean").to_frame()
    for pct in percentiles:
        out[f"p{pct}"] = grouped.quantile(pct / 100.0)
    out["n"] = grouped.size()
    return out.reset_index()


def idiosyncratic_stats(
    panel: pd.DataFrame,
    returns: pd.DataFrame,
    market: pd.Series,
    window: int = 60,
) -> pd.DataFrame:
    """Covariance and correlation of scores with trailing idiosyncratic vol.

    For each filing, idiosyncratic volatility is computed from the firm's
    last ``window`` monthly returns ending at the filing month:
    ``sqrt(var(r) - cov(r, m)^2 / var(m))`` with population moments.
    Filings with fewer than ``window`` months of overlap with the market
    series are skipped and logged.  Zero variance on either side of a
    correlation is guarded: the pair contributes a zero correlation and a
    warning is emitted.
    """
    validate_score_panel(panel)
    market = market.sort_index()
    wide = returns.pivot(index="month", columns="asset_id", values="excess_return")
    wide = wide.sort_index()

    vols: dict[tuple[str, str], float] = {}
    skipped = 0
    for firm_id, filing_date in panel[["firm_id", "filing_date"]].drop_duplicates().itertuples(
        index=False
    ):
        if firm_id not in wide.columns:
            skipped += 1
            continue
        month = filing_date[:7]
        series = wide[firm_id].dropna()
        series = series[series.index <= month]
        joint = pd.concat([series, market], axis=1, join="inner").dropna()
        if len(joint) < window:
            skipped += 1
            continue
        tail = joint.iloc[-window:]
        r = tail.iloc[:, 0].to_numpy()
        m = tail.iloc[:, 1].to_numpy()
        var_m = m.var()
        if var_m == 0.0:
            logger.warning("market variance is zero in window ending %s; using 0", month)
            vols[(firm_id, filing_date)] = 0.0
            continue
        var_idio = r.var() - np.cov(r, m, ddof=0)[0, 1] ** 2 / var_m
        vols[(firm_id, filing_date)] = math.sqrt(max(var_idio, 0.0))
    if skipped:
        logger.info("idiosyncratic_stats: skipped %d filings with short history", skipped)

    rows = []
    for kind in sorted(panel["score_kind"].unique()):
        sub = panel[panel["score_kind"] == kind]
        pairs = [
            (row.value, vols[(row.firm_id, row.filing_date)])
            for row in sub.itertuples(index=False)
            if (row.firm_id, row.filing_date) in vols
        ]
        if not pairs:
            continue
        scores = np.array([p[0] for p in pairs])
        vol = np.array([p[1] for p in pairs])
        cov = float(np.cov(scores, vol, ddof=0)[0, 1]) if len(pairs) > 1 else 0.0
        if scores.std() == 0.0 or vol.std() == 0.0:
            logger.warning("zero variance for %s; correlation set to 0", kind)
            corr = 0.0
        else:
            corr = float(np.corrcoef(scores, vol)[0, 1])
        rows.append((kind, cov, corr, len(pairs)))
    return pd.DataFrame(rows, columns=["score_kind", "covariance", "correlation", "n_obs"])
