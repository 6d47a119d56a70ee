"""Synthetic data generator with planted structure.

Emits every file format the pipeline consumes: a knowledgebase whose
tactics draw words from four disjoint topic pools (the planted
super-tactic grouping), firm filings whose cyber-word intensity follows a
latent exposure, monthly returns with a planted premium per exposure
quintile, a factor panel, daily returns with a planted event shock, the
industry map, word lists, and a filing index.  A manifest records every
planted truth so tests can use them as oracles.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .cluster import SUPER_TACTICS
from .ingest import FF12_RANGES, TACTICS
from .portfolio import int_to_month, month_to_int
from .score import load_risk_words

_VOWELS = "aeiou"
_CONSONANTS = "bcdfglmnprstvz"

STOPWORDS = (
    "the a an and or of to in for on with is are be this that it as by at "
    "from we our its have has was were which their they"
).split()

COMMON_WORDS = (
    "company business operations financial fiscal report annual period "
    "management results products services customers market industry"
).split()


@dataclass
class SynthConfig:
    """Knobs for the generator; defaults give the desk-scale world."""

    n_firms: int = 200
    n_months: int = 180
    start_month: str = "2009-01"
    kb_entries: int = 785
    paragraphs_per_filing: int = 2
    kb_word_range: tuple[int, int] = (30, 40)
    filing_word_range: tuple[int, int] = (42, 56)
    pool_size: int = 80
    neutral_pool_size: int = 240
    premium_per_quintile: float = 0.001
    n_quintiles: int = 5
    idio_sigma: float = 0.05
    mkt_mu: float = 0.006
    mkt_sigma: float = 0.045
    beta_range: tuple[float, float] = (0.5, 1.5)
    cyber_base: float = 0.15
    cyber_span: float = 0.7
    risk_word_prob: float = 0.6
    rf: float = 0.003
    factor_premia: dict = field(
        default_factory=lambda: {
            "SMB": (0.0015, 0.025),
            "HML": (0.002, 0.025),
            "UMD": (0.004, 0.035),
            "CMA": (0.002, 0.018),
            "RMW": (0.0025, 0.018),
        }
    )
    n_daily: int = 400
    event_offset: int = 70
    daily_sigma: float = 0.012
    daily_mkt_mu: float = 0.0003
    daily_mkt_sigma: float = 0.009
    event_shock: float = -0.01
    event_shock_days: tuple[int, ...] = (0, 1)
    event_windows: tuple[tuple[int, int], ...] = ((-1, 1), (-1, 3))
    estimation_days: int = 252


def _make_words(rng: np.random.Generator, count: int, taken: set[str]) -> list[str]:
    """Pronounceable lowercase pseudo-words, unique across pools."""
    words = []
    while len(words) < count:
        n_syll = int(rng.integers(3, 5))
        word = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(n_syll)
        )
        if word in taken:
            continue
        taken.add(word)
        words.append(word)
    return words


def _sentence(rng: np.random.Generator, pool: Sequence[str], n_words: int,
              extra: list[str] | None = None) -> str:
    # Zipf-ish weights so pools have a frequency profile like real text.
    ranks = np.arange(1, len(pool) + 1, dtype=float)
    weights = 1.0 / ranks
    weights /= weights.sum()
    idx = np.searchsorted(np.cumsum(weights), rng.random(n_words))
    words = [pool[min(i, len(pool) - 1)] for i in idx]
    if extra:
        for word in extra:
            pos = int(rng.integers(len(words) + 1))
            words.insert(pos, word)
    # Sprinkle stopwords so the cleaning stage has something to remove.
    out = []
    for word in words:
        if rng.random() < 0.25:
            out.append(STOPWORDS[int(rng.integers(len(STOPWORDS)))])
        out.append(word)
    text = " ".join(out)
    return text[0].upper() + text[1:] + "."


def _passage(rng: np.random.Generator, pool: Sequence[str], total_words: int,
             extra: list[str] | None = None) -> str:
    """A few sentences whose content words sum to ``total_words``."""
    sentences = []
    remaining = total_words
    first = True
    while remaining > 0:
        n = int(min(remaining, rng.integers(9, 15)))
        sentences.append(_sentence(rng, pool, n, extra if first else None))
        first = False
        remaining -= n
    return " ".join(sentences)


def generate(config: SynthConfig, out_dir, seed: int, *, table_header: str = "") -> dict:
    """Write the full synthetic dataset and return the manifest.

    ``table_header`` is prepended verbatim to every CSV table (the CLI
    passes its provenance comment line).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    def write_csv(frame: pd.DataFrame, name: str) -> None:
        (out / name).write_text(
            table_header + frame.to_csv(index=False, lineterminator="\n"),
            encoding="utf-8",
        )

    # --- vocabulary pools -------------------------------------------------
    taken = set(STOPWORDS) | set(COMMON_WORDS)
    group_names = sorted(SUPER_TACTICS)
    pools = {g: _make_words(rng, config.pool_size, taken) for g in group_names}
    neutral_pool = _make_words(rng, config.neutral_pool_size, taken)
    group_of_tactic = {
        tactic: group
        for group in group_names
        for tactic in SUPER_TACTICS[group]
    }
    risk_words = sorted(load_risk_words())

    # --- knowledgebase ----------------------------------------------------
    kb = []
    for i in range(config.kb_entries):
        tactic = TACTICS[i % len(TACTICS)]
        pool = pools[group_of_tactic[tactic]]
        n_words = int(rng.integers(config.kb_word_range[0], config.kb_word_range[1] + 1))
        kb.append(
            {
                "tactic": tactic,
                "technique": f"Technique {i // len(TACTICS)}",
                "sub_technique": f"Sub-technique {i}",
                "description": _passage(rng, pool, n_words),
            }
        )
    (out / "kb.json").write_text(json.dumps(kb, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    # --- firms --------------------------------------------------------
    firm_ids = [f"F{i:04d}" for i in range(config.n_firms)]
    theta = rng.permutation(config.n_firms) / max(config.n_firms - 1, 1)
    order = np.argsort(np.argsort(theta, kind="stable"), kind="stable")
    quintile = (order * config.n_quintiles) // config.n_firms
    betas = rng.uniform(*config.beta_range, size=config.n_firms)
    caps = np.exp(rng.normal(8.0, 1.0, size=config.n_firms))
    book_to_market = np.exp(rng.normal(-0.3, 0.4, size=config.n_firms))
    sic_choices = [2050, 2520, 3210, 1310, 2850, 3572, 4813, 4911, 5411, 2836, 6022, 7215, 4700]
    sics = [sic_choices[i % len(sic_choices)] for i in range(config.n_firms)]

    from .ingest import map_sic_to_industry

    firms = pd.DataFrame(
        {
            "firm_id": firm_ids,
            "sic": sics,
            "industry": [map_sic_to_industry(s, FF12_RANGES) for s in sics],
        }
    )
    write_csv(firms, "firms.csv")

    # --- filings ------------------------------------------------------
    start_serial = month_to_int(config.start_month)
    start_year = start_serial // 12
    end_year = (start_serial + config.n_months - 1) // 12
    filings = []
    index_lines = []
    for i, firm in enumerate(firm_ids):
        month = (i % 12) + 1
        day = (i * 7) % 28 + 1
        p_cyber = config.cyber_base + config.cyber_span * theta[i]
        for year in range(start_year - 1, end_year + 1):
            date = f"{year:04d}-{month:02d}-{day:02d}"
            paragraphs = []
            for _ in range(config.paragraphs_per_filing):
                n_words = int(
                    rng.integers(config.filing_word_range[0], config.filing_word_range[1] + 1)
                )
                if rng.random() < p_cyber:
                    tactic = TACTICS[int(rng.integers(len(TACTICS)))]
                    pool = pools[group_of_tactic[tactic]]
                    extra = (
                        [risk_words[int(rng.integers(len(risk_words)))]]
                        if rng.random() < config.risk_word_prob
                        else None
                    )
                    paragraphs.append(_passage(rng, pool, n_words, extra))
                else:
                    paragraphs.append(_passage(rng, neutral_pool, n_words))
            doc_id = f"filing-{firm}-{year}"
            filings.append(
                {
                    "doc_id": doc_id,
                    "firm_id": firm,
                    "filing_date": date,
                    "text": "\n\n".join(paragraphs),
                }
            )
            # Every 97th filing is an amendment, filtered out unless the
            # pipeline is told to keep 10-K/A rows.
            form = "10-K/A" if len(filings) % 97 == 0 else "10-K"
            index_lines.append(f"{100000 + i}|Firm {firm}|{form}|{date}|filings/{doc_id}.txt")
    index_lines.append("BADCIK|Mangled Row Co|10-K|2010-01-01|filings/none.txt")
    index_lines.append("too|few|fields")
    with (out / "filings.jsonl").open("w", encoding="utf-8") as fh:
        for filing in filings:
            fh.write(json.dumps(filing, sort_keys=True) + "\n")
    (out / "filings_index.txt").write_text("\n".join(index_lines) + "\n", encoding="utf-8")

    # --- monthly returns and factors -----------------------------------
    months = [int_to_month(start_serial + t) for t in range(config.n_months)]
    mkt = rng.normal(config.mkt_mu, config.mkt_sigma, size=config.n_months)
    factor_frame = pd.DataFrame({"month": months, "Mkt": mkt})
    for name, (mu, sigma) in config.factor_premia.items():
        factor_frame[name] = rng.normal(mu, sigma, size=config.n_months)
    factor_frame["rf"] = config.rf
    write_csv(factor_frame, "factors.csv")

    noise = rng.normal(0.0, config.idio_sigma, size=(config.n_months, config.n_firms))
    returns = (
        betas[None, :] * mkt[:, None]
        + config.premium_per_quintile * quintile[None, :]
        + noise
    )
    rows = []
    for t, month in enumerate(months):
        for i, firm in enumerate(firm_ids):
            rows.append(
                (
                    firm,
                    month,
                    returns[t, i],
                    caps[i],
                    betas[i],
                    book_to_market[i],
                    float(np.log(caps[i])),
                )
            )
    returns_frame = pd.DataFrame(
        rows,
        columns=["asset_id", "month", "excess_return", "market_cap", "beta",
                 "book_to_market", "size"],
    )
    write_csv(returns_frame, "returns.csv")

    # --- daily returns and the event -----------------------------------
    end_serial = start_serial + config.n_months - 1
    last_day = np.datetime64(f"{int_to_month(end_serial)}-01")
    weekdays = []
    day = last_day
    while len(weekdays) < config.n_daily:
        dow = (day.astype("datetime64[D]").view("int64") - 4) % 7
        if dow < 5:
            weekdays.append(str(day))
        day -= np.timedelta64(1, "D")
    weekdays.reverse()
    event_pos = len(weekdays) - config.event_offset
    event_date = weekdays[event_pos]

    mkt_daily = rng.normal(config.daily_mkt_mu, config.daily_mkt_sigma, size=len(weekdays))
    shock_days = {event_pos + off for off in config.event_shock_days}
    affected = quintile == config.n_quintiles - 1
    daily_rows = [("MKT", d, mkt_daily[j]) for j, d in enumerate(weekdays)]
    daily_noise = rng.normal(0.0, config.daily_sigma, size=(len(weekdays), config.n_firms))
    for j, date in enumerate(weekdays):
        shock = config.event_shock if j in shock_days else 0.0
        for i, firm in enumerate(firm_ids):
            r = betas[i] * mkt_daily[j] + daily_noise[j, i]
            if shock and affected[i]:
                r += shock
            daily_rows.append((firm, date, r))
    write_csv(pd.DataFrame(daily_rows, columns=["asset_id", "date", "return"]), "daily_returns.csv")

    event_config = {
        "event_date": event_date,
        "windows": [list(w) for w in config.event_windows],
        "estimation_days": config.estimation_days,
    }
    (out / "event.json").write_text(
        json.dumps(event_config, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )

    # --- word lists and industry map ------------------------------------
    (out / "stopwords.txt").write_text(
        "# stop-words removed before tokenization\n" + "\n".join(STOPWORDS) + "\n",
        encoding="utf-8",
    )
    (out / "common_words.txt").write_text(
        "# high-frequency boilerplate removed before tokenization\n"
        + "\n".join(COMMON_WORDS) + "\n",
        encoding="utf-8",
    )
    sic_frame = pd.DataFrame(FF12_RANGES, columns=["sic_low", "sic_high", "industry"])
    write_csv(sic_frame, "sic_map.csv")

    # --- manifest of planted truths --------------------------------------
    expected_car = {
        str(config.n_quintiles): float(
            config.event_shock * len(config.event_shock_days)
        ),
        "1": 0.0,
    }
    manifest = {
        "seed": seed,
        "config": {k: v if not isinstance(v, tuple) else list(v)
                   for k, v in asdict(config).items()},
        "tactic_groups": group_of_tactic,
        "theta": {firm: float(theta[i]) for i, firm in enumerate(firm_ids)},
        "planted_quintile": {firm: int(quintile[i]) for i, firm in enumerate(firm_ids)},
        "betas": {firm: float(betas[i]) for i, firm in enumerate(firm_ids)},
        "premium_per_quintile": config.premium_per_quintile,
        "event": {
            "date": event_date,
            "shock_per_day": config.event_shock,
            "shock_days": list(config.event_shock_days),
            "affected_quintile": config.n_quintiles,
            "expected_car_by_quintile": expected_car,
        },
        "files": sorted(p.name for p in out.iterdir()),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest
