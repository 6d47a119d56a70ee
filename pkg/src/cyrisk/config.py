"""Run configuration shared by the command-line stages.

A single dataclass holds every tunable so a run can be reproduced from
its JSON echo alone; the short hash of the canonical encoding is stamped
into every output table header.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path


@dataclass
class RunConfig:
    """Tunables for the full pipeline, with the defaults used throughout."""

    # text preparation
    target_words: int = 40

    # embedding
    dimension: int = 64
    epochs: int = 40
    negatives: int = 5
    learning_rate: float = 0.025
    infer_steps: int = 50

    # clustering
    low: float = 0.25
    high: float = 0.85
    high_value: float = 0.5
    cluster_method: str = "louvain"
    kmeans_k: int = 4
    spectral_k: int = 4
    spectral_egn: int = 6

    # scoring
    trim: float = 0.99
    score_kind: str = "overall"

    # portfolio formation
    n_bins: int = 5
    monthly_weights: bool = False

    # asset pricing
    fm_bins: int = 20
    beta_window: int = 24
    hac: bool = False
    hac_lags: int = 6
    prior_multiple: float = 1.25
    k_mode: str = "original"
    expanding: bool = True
    min_bgrs_months: int = 60

    # events
    estimation_days: int = 252

    # ingest
    include_amended: bool = False

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        payload = json.loads(text)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(payload) - names)
        if unknown:
            raise ValueError(f"unknown config fields: {', '.join(unknown)}")
        return cls(**payload)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def config_hash(config: RunConfig) -> str:
    """Short stable digest of the canonical JSON encoding."""
    canonical = json.dumps(dataclasses.asdict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
