"""File-format plumbing: index files, knowledgebase, panels, SIC mapping.

Everything external enters through here and is validated at the
boundary: duplicate keys are rejected, months must be contiguous where a
window will slide over them, and malformed rows are reported with their
line number instead of being silently skipped.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import pandas as pd

logger = logging.getLogger(__name__)

TACTICS: tuple[str, ...] = (
    "Reconnaissance",
    "Resource Development",
    "Initial Access",
    "Execution",
    "Persistence",
    "Privilege Escalation",
    "Defense Evasion",
    "Credential Access",
    "Discovery",
    "Lateral Movement",
    "Collection",
    "Command and Control",
    "Exfiltration",
    "Impact",
)

_MONTH_RE = re.compile(r"^\d{4}-\d{2}$")
_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")

# SIC ranges for the standard 12-industry grouping; first match wins and
# anything unmatched falls into "Other".
FF12_RANGES: tuple[tuple[int, int, str], ...] = (
    (100, 999, "Consumer NonDurables"),
    (2000, 2399, "Consumer NonDurables"),
    (2700, 2749, "Consumer NonDurables"),
    (2770, 2799, "Consumer NonDurables"),
    (3100, 3199, "Consumer NonDurables"),
    (3940, 3989, "Consumer NonDurables"),
    (2500, 2519, "Consumer Durables"),
    (2590, 2599, "Consumer Durables"),
    (3630, 3659, "Consumer Durables"),
    (3710, 3711, "Consumer Durables"),
    (3714, 3714, "Consumer Durables"),
    (3716, 3716, "Consumer Durables"),
    (3750, 3751, "Consumer Durables"),
    (3792, 3792, "Consumer Durables"),
    (3900, 3939, "Consumer Durables"),
    (3990, 3999, "Consumer Durables"),
    (2520, 2589, "Manufacturing"),
    (2600, 2699, "Manufacturing"),
    (2750, 2769, "Manufacturing"),
    (3000, 3099, "Manufacturing"),
    (3200, 3569, "Manufacturing"),
    (3580, 3629, "Manufacturing"),
    (3700, 3709, "Manufacturing"),
    (3712, 3713, "Manufacturing"),
    (3715, 3715, "Manufacturing"),
    (3717, 3749, "Manufacturing"),
    (3752, 3791, "Manufacturing"),
    (3793, 3799, "Manufacturing"),
    (3830, 3839, "Manufacturing"),
    (3860, 3899, "Manufacturing"),
    (1200, 1399, "Energy"),
    (2900, 2999, "Energy"),
    (2800, 2829, "Chemicals"),
    (2840, 2899, "Chemicals"),
    (3570, 3579, "Business Equipment"),
    (3660, 3692, "Business Equipment"),
    (3694, 3699, "Business Equipment"),
    (3810, 3829, "Business Equipment"),
    (7370, 7379, "Business Equipment"),
    (4800, 4899, "Telecom"),
    (4900, 4949, "Utilities"),
    (5000, 5999, "Shops"),
    (7200, 7299, "Shops"),
    (7600, 7699, "Shops"),
    (2830, 2839, "Healthcare"),
    (3693, 3693, "Healthcare"),
    (3840, 3859, "Healthcare"),
    (8000, 8099, "Healthcare"),
    (6000, 6999, "Finance"),
)


# ---------------------------------------------------------------------------
# Filing index files


@dataclass(frozen=True)
class EdgarIndexRow:
    cik: int
    company: str
    form_type: str
    date_filed: str
    filename: str


def parse_edgar_index(
    lines: Iterable[str], *, include_amended: bool = False
) -> tuple[list[EdgarIndexRow], list[str]]:
    """Parse pipe-delimited filing index lines, keeping annual reports.

    A row must have exactly five fields: CIK, company name, form type,
    ISO date, filename.  Rows whose form type is exactly ``10-K`` are
    retained; ``10-K/A`` amendments only when ``include_amended``.  Rows
    that fail to parse are reported (line number and reason) rather than
    dropped silently; if nothing parses at all the file is rejected.
    """
    wanted = {"10-K"} | ({"10-K/A"} if include_amended else set())
    rows: list[EdgarIndexRow] = []
    errors: list[str] = []
    parseable = 0
    total = 0
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        total += 1
        fields = line.split("|")
        if len(fields) != 5:
            errors.append(f"line {lineno}: expected 5 pipe-delimited fields")
            continue
        cik_str, company, form_type, date_filed, filename = (f.strip() for f in fields)
        if not cik_str.isdigit():
            errors.append(f"line {lineno}: CIK {cik_str!r} is not numeric")
            continue
        try:
            dt.date.fromisoformat(date_filed)
        except ValueError:
            errors.append(f"line {lineno}: bad date {date_filed!r}")
            continue
        if not filename:
            errors.append(f"line {lineno}: empty filename")
            continue
        parseable += 1
        if form_type in wanted:
            rows.append(EdgarIndexRow(int(cik_str), company, form_type, date_filed, filename))
    if total and parseable == 0:
        raise ValueError(f"zero parseable lines in index ({len(errors)} errors)")
    return rows, errors


def serialize_edgar_row(row: EdgarIndexRow) -> str:
    return f"{row.cik}|{row.company}|{row.form_type}|{row.date_filed}|{row.filename}"


# ---------------------------------------------------------------------------
# Knowledgebase


@dataclass(frozen=True)
class KnowledgebaseEntry:
    tactic: str
    technique: str
    sub_technique: str
    description: str


def load_knowledgebase(path) -> list[KnowledgebaseEntry]:
    """Load the attack knowledgebase: a JSON array of labelled descriptions.

    Each entry carries a tactic (one of the fourteen canonical names), a
    technique, a sub-technique and a nonempty description paragraph.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError("knowledgebase must be a JSON array")
    entries = []
    valid = set(TACTICS)
    for i, obj in enumerate(data):
        missing = [k for k in ("tactic", "technique", "sub_technique", "description") if k not in obj]
        if missing:
            raise ValueError(f"knowledgebase entry {i}: missing fields {missing}")
        if obj["tactic"] not in valid:
            raise ValueError(
                f"knowledgebase entry {i} ({obj.get('technique')!r}): "
                f"unknown tactic {obj['tactic']!r}"
            )
        if not str(obj["description"]).strip():
            raise ValueError(f"knowledgebase entry {i} ({obj.get('technique')!r}): empty description")
        entries.append(
            KnowledgebaseEntry(
                obj["tactic"], str(obj["technique"]), str(obj["sub_technique"]),
                str(obj["description"]),
            )
        )
    logger.info("loaded %d knowledgebase entries", len(entries))
    return entries


# ---------------------------------------------------------------------------
# Industry mapping


def load_sic_table(path) -> list[tuple[int, int, str]]:
    """Read a SIC range table (lo, hi, industry) and reject overlaps."""
    frame = pd.read_csv(path, comment="#")
    required = ["sic_low", "sic_high", "industry"]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ValueError(f"SIC table missing columns: {missing}")
    table = [
        (int(row.sic_low), int(row.sic_high), str(row.industry))
        for row in frame.itertuples(index=False)
    ]
    for lo, hi, name in table:
        if lo > hi:
            raise ValueError(f"SIC range ({lo}, {hi}) is inverted")
    ordered = sorted(table)
    for (lo1, hi1, n1), (lo2, hi2, n2) in zip(ordered, ordered[1:]):
        if lo2 <= hi1:
            raise ValueError(
                f"overlapping SIC ranges: ({lo1}-{hi1} {n1!r}) and ({lo2}-{hi2} {n2!r})"
            )
    return table


def map_sic_to_industry(sic: int, table: Sequence[tuple[int, int, str]] = FF12_RANGES) -> str:
    """First matching range wins; codes outside every range map to Other."""
    for lo, hi, name in table:
        if lo <= sic <= hi:
            return name
    return "Other"


# ---------------------------------------------------------------------------
# Panel loaders


def _read_csv(path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing input: {path}")
    return pd.read_csv(path, comment="#", dtype={"asset_id": str, "firm_id": str})


def _check_months(values: Iterable[str], where: str) -> None:
    bad = [m for m in values if not _MONTH_RE.match(str(m))]
    if bad:
        raise ValueError(f"{where}: month values must be YYYY-MM, got {bad[:3]}")


def load_returns_panel(path) -> pd.DataFrame:
    """Monthly returns panel: asset_id, month, excess_return, market_cap,
    plus any characteristic columns (beta, book_to_market, size)."""
    frame = _read_csv(path)
    from .portfolio import validate_returns_panel

    validate_returns_panel(frame)
    _check_months(frame["month"].unique(), str(path))
    return frame.sort_values(["asset_id", "month"], kind="stable").reset_index(drop=True)


def load_factor_panel(path) -> pd.DataFrame:
    """Monthly factor panel indexed by month; months must be contiguous."""
    frame = _read_csv(path)
    if "month" not in frame.columns:
        raise ValueError(f"{path}: factor panel needs a month column")
    _check_months(frame["month"].unique(), str(path))
    if frame["month"].duplicated().any():
        raise ValueError(f"{path}: duplicate months in factor panel")
    frame = frame.sort_values("month", kind="stable").set_index("month")
    from .portfolio import month_to_int

    serials = [month_to_int(m) for m in frame.index]
    gaps = [s2 - s1 for s1, s2 in zip(serials, serials[1:]) if s2 - s1 != 1]
    if gaps:
        raise ValueError(f"{path}: factor panel months are not contiguous")
    return frame


def load_daily_returns(path) -> pd.DataFrame:
    """Daily returns: asset_id, date, return; one row per asset-day."""
    frame = _read_csv(path)
    required = ["asset_id", "date", "return"]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: daily returns missing columns: {missing}")
    bad = [d for d in frame["date"].unique() if not _DATE_RE.match(str(d))]
    if bad:
        raise ValueError(f"{path}: dates must be YYYY-MM-DD, got {bad[:3]}")
    if frame.duplicated(subset=["asset_id", "date"]).any():
        raise ValueError(f"{path}: duplicate asset-day rows")
    return frame.sort_values(["asset_id", "date"], kind="stable").reset_index(drop=True)


def load_score_panel(path) -> pd.DataFrame:
    frame = _read_csv(path)
    from .score import validate_score_panel

    return validate_score_panel(frame).sort_values(
        ["firm_id", "filing_date", "score_kind"], kind="stable"
    ).reset_index(drop=True)


def load_filings(path) -> list[dict]:
    """Read filings as JSON lines: doc_id, firm_id, filing_date, text."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing input: {path}")
    filings = []
    seen = set()
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        obj = json.loads(raw)
        missing = [k for k in ("doc_id", "firm_id", "filing_date", "text") if k not in obj]
        if missing:
            raise ValueError(f"{path} line {lineno}: missing fields {missing}")
        key = (obj["firm_id"], obj["filing_date"])
        if key in seen:
            raise ValueError(f"duplicate filing for {key[0]} on {key[1]}")
        seen.add(key)
        filings.append(obj)
    return filings
