"""Command-line front end wiring the pipeline stages together.

Each subcommand reads and writes files under a run directory so stages
can be executed one at a time or chained end to end.  Every output table
starts with a provenance comment naming the producing subcommand and the
hash of the resolved configuration, and each stage echoes that resolved
configuration next to its outputs.  Two runs with identical inputs,
configuration and seeds produce byte-identical files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .config import RunConfig, config_hash
from .textprep import Paragraph, RawDocument, SourceKind, load_word_list, preprocess, segment_paragraphs

logger = logging.getLogger("cyrisk")

_CLUSTER_METHODS = ("louvain", "kmeans", "spectral")
MARKET_ASSET = "MKT"


# ---------------------------------------------------------------------------
# Plumbing


def write_table(frame: pd.DataFrame, path, subcommand: str, cfg_hash: str) -> None:
    """Write a CSV table with the provenance comment line on top."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"# produced-by: cyrisk {subcommand} | config: {cfg_hash}\n"
    path.write_text(
        header + frame.to_csv(index=False, lineterminator="\n"), encoding="utf-8"
    )


def _echo_config(cfg: RunConfig, out_dir: Path) -> str:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(cfg.to_json(), encoding="utf-8")
    return config_hash(cfg)


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overridden by --config file, overridden by explicit flags."""
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    return cfg


def _require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing input: {path}")
    return path


def _run_paths(args: argparse.Namespace) -> Path:
    return Path(args.run)


def _read_jsonl(path) -> list[dict]:
    rows = []
    for raw in _require(path).read_text(encoding="utf-8").splitlines():
        if raw.strip():
            rows.append(json.loads(raw))
    return rows


def _write_jsonl(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _load_paragraphs(path) -> list[Paragraph]:
    return [
        Paragraph(row["doc_id"], int(row["index"]), tuple(row["tokens"]))
        for row in _read_jsonl(path)
    ]


def _portfolio_series_map(path) -> dict[str, pd.Series]:
    """Read a long portfolios table back into per-series month-indexed data."""
    frame = pd.read_csv(_require(path), comment="#")
    out: dict[str, pd.Series] = {}
    for name, grp in frame.groupby("series", sort=False):
        out[name] = pd.Series(
            grp["return"].to_numpy(dtype=float),
            index=pd.Index(grp["month"], name="month"),
            name=name,
        )
    return out


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args: argparse.Namespace) -> int:
    import hashlib

    from .synth import SynthConfig, generate

    config = SynthConfig()
    if args.firms is not None:
        config.n_firms = args.firms
    if args.months is not None:
        config.n_months = args.months
    if args.kb_entries is not None:
        config.kb_entries = args.kb_entries
    if args.paragraphs is not None:
        config.paragraphs_per_filing = args.paragraphs
    if args.start_month is not None:
        config.start_month = args.start_month
    out = _run_paths(args) / "data"
    payload = json.dumps(
        {**dataclasses.asdict(config), "seed": args.seed},
        sort_keys=True, separators=(",", ":"), default=list,
    )
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]
    header = f"# produced-by: cyrisk synth | config: {digest}\n"
    manifest = generate(config, out, args.seed, table_header=header)
    logger.info("synthetic dataset written to %s (%d files)", out, len(manifest["files"]))
    return 0


def cmd_prep(args: argparse.Namespace) -> int:
    from .ingest import load_filings, load_knowledgebase, parse_edgar_index

    run = _run_paths(args)
    cfg = _resolve_config(args)
    out = run / "prep"
    cfg_hash = _echo_config(cfg, out)

    data = run / "data"
    filings_path = Path(args.filings) if args.filings else data / "filings.jsonl"
    kb_path = Path(args.kb) if args.kb else data / "kb.json"
    stop_path = Path(args.stopwords) if args.stopwords else data / "stopwords.txt"
    common_path = Path(args.common_words) if args.common_words else data / "common_words.txt"

    stoplist = load_word_list(_require(stop_path))
    common = load_word_list(_require(common_path))
    filings = load_filings(_require(filings_path))
    entries = load_knowledgebase(_require(kb_path))

    index_path = Path(args.index) if args.index else data / "filings_index.txt"
    if index_path.exists():
        rows, errors = parse_edgar_index(
            index_path.read_text(encoding="utf-8").splitlines(),
            include_amended=cfg.include_amended,
        )
        if errors:
            logger.warning("index: %d unparseable rows reported", len(errors))
            (out / "index_errors.txt").write_text(
                "\n".join(errors) + "\n", encoding="utf-8"
            )
        keep = {Path(r.filename).stem for r in rows}
        before = len(filings)
        filings = [f for f in filings if f["doc_id"] in keep]
        logger.info("index filter kept %d of %d filings", len(filings), before)

    filing_rows = []
    meta_rows = []
    empty = 0
    for filing in sorted(filings, key=lambda f: f["doc_id"]):
        doc = RawDocument(filing["doc_id"], SourceKind.FILING, filing["text"])
        sentences = preprocess(doc, stoplist, common)
        paras = segment_paragraphs(sentences, cfg.target_words, doc_id=doc.doc_id)
        if not paras:
            empty += 1
        for p in paras:
            filing_rows.append(
                {"doc_id": p.doc_id, "index": p.index, "tokens": list(p.tokens)}
            )
        meta_rows.append(
            (filing["doc_id"], filing["firm_id"], filing["filing_date"], len(paras))
        )
    if empty:
        logger.warning("%d filings produced no paragraphs after cleaning", empty)

    kb_rows = []
    tactic_rows = []
    for i, entry in enumerate(entries):
        doc_id = f"kb-{i:05d}"
        doc = RawDocument(doc_id, SourceKind.KNOWLEDGEBASE, entry.description)
        sentences = preprocess(doc, stoplist, common)
        for p in segment_paragraphs(sentences, cfg.target_words, doc_id=doc_id):
            kb_rows.append(
                {"doc_id": p.doc_id, "index": p.index, "tokens": list(p.tokens)}
            )
            tactic_rows.append((doc_id, p.index, entry.tactic, entry.technique))

    _write_jsonl(filing_rows, out / "filing_paragraphs.jsonl")
    _write_jsonl(kb_rows, out / "kb_paragraphs.jsonl")
    write_table(
        pd.DataFrame(tactic_rows, columns=["doc_id", "index", "tactic", "technique"]),
        out / "kb_tactics.csv", "prep", cfg_hash,
    )
    write_table(
        pd.DataFrame(meta_rows, columns=["doc_id", "firm_id", "filing_date", "n_paragraphs"]),
        out / "filing_meta.csv", "prep", cfg_hash,
    )
    words = [len(r["tokens"]) for r in filing_rows + kb_rows]
    summary = pd.DataFrame(
        [
            ("n_filings", len(filings)),
            ("n_filing_paragraphs", len(filing_rows)),
            ("n_kb_entries", len(entries)),
            ("n_kb_paragraphs", len(kb_rows)),
            ("mean_paragraph_words", float(np.mean(words)) if words else 0.0),
        ],
        columns=["metric", "value"],
    )
    write_table(summary, out / "prep_summary.csv", "prep", cfg_hash)
    logger.info(
        "prepared %d filing and %d knowledgebase paragraphs",
        len(filing_rows), len(kb_rows),
    )
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    from .embed import save_vectors, train_dbow

    run = _run_paths(args)
    cfg = _resolve_config(args)
    out = run / "embed"
    cfg_hash = _echo_config(cfg, out)

    prep = run / "prep"
    filing_paras = _load_paragraphs(prep / "filing_paragraphs.jsonl")
    kb_paras = _load_paragraphs(prep / "kb_paragraphs.jsonl")
    kb_refs = {p.ref for p in kb_paras}

    model, vectors = train_dbow(
        filing_paras + kb_paras,
        dimension=cfg.dimension,
        epochs=cfg.epochs,
        negatives=cfg.negatives,
        learning_rate=cfg.learning_rate,
        seed=args.seed,
    )
    save_vectors(
        [v for ref, v in vectors.items() if ref in kb_refs], out / "kb_vectors.tsv"
    )
    save_vectors(
        [v for ref, v in vectors.items() if ref not in kb_refs],
        out / "filing_vectors.tsv",
    )
    losses = pd.DataFrame(
        {"epoch": range(1, len(model.epoch_losses) + 1), "mean_loss": model.epoch_losses}
    )
    write_table(losses, out / "training_loss.csv", "embed", cfg_hash)
    logger.info(
        "trained %d-dim vectors for %d paragraphs (vocabulary %d)",
        cfg.dimension, len(vectors), model.vocabulary_size,
    )
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    from .cluster import clustering_report, majority_assign, name_super_groups
    from .embed import load_vectors

    run = _run_paths(args)
    cfg = _resolve_config(args)
    if cfg.cluster_method not in _CLUSTER_METHODS:
        raise ValueError(
            f"unknown cluster method {cfg.cluster_method!r}; choose from {_CLUSTER_METHODS}"
        )
    out = run / "cluster"
    cfg_hash = _echo_config(cfg, out)

    vectors = load_vectors(_require(run / "embed" / "kb_vectors.tsv"))
    tactics_frame = pd.read_csv(_require(run / "prep" / "kb_tactics.csv"), comment="#")
    by_ref = {
        (row.doc_id, row.index): row.tactic for row in tactics_frame.itertuples(index=False)
    }
    try:
        tactics = [by_ref[v.paragraph_ref] for v in vectors]
    except KeyError as exc:
        raise ValueError(f"knowledgebase vector without a tactic label: {exc}") from exc

    rows, assignments = clustering_report(
        vectors, tactics,
        seed=args.seed,
        low=cfg.low, high=cfg.high, high_value=cfg.high_value,
        kmeans_ks=(cfg.kmeans_k,),
        spectral_params=((cfg.spectral_k, cfg.spectral_k), (cfg.spectral_k, cfg.spectral_egn)),
    )
    report = pd.DataFrame([dataclasses.asdict(r) for r in rows])
    write_table(report, out / "clustering_report.csv", "cluster", cfg_hash)

    if cfg.cluster_method == "louvain":
        key = f"louvain(low={cfg.low},high={cfg.high})"
    elif cfg.cluster_method == "kmeans":
        key = f"spherical_kmeans(k={cfg.kmeans_k})"
    else:
        key = f"spectral(k={cfg.spectral_k},egn={cfg.spectral_egn})"
    chosen = assignments[key]
    mapping = majority_assign(chosen, tactics)
    names = name_super_groups(mapping)

    super_rows = [
        (tactic, mapping[tactic], names[mapping[tactic]]) for tactic in sorted(mapping)
    ]
    write_table(
        pd.DataFrame(super_rows, columns=["tactic", "cluster", "super_group"]),
        out / "super_map.csv", "cluster", cfg_hash,
    )
    node_rows = [
        (v.paragraph_ref[0], v.paragraph_ref[1], tactics[i], int(chosen.labels[i]))
        for i, v in enumerate(vectors)
    ]
    write_table(
        pd.DataFrame(node_rows, columns=["doc_id", "index", "tactic", "cluster"]),
        out / "assignment.csv", "cluster", cfg_hash,
    )
    logger.info("selected %s with %d clusters", key, chosen.n_clusters)
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    from .embed import load_vectors
    from .score import aggregate_yearly, build_score_panel, load_risk_words, score_filing

    run = _run_paths(args)
    cfg = _resolve_config(args)
    out = run / "score"
    cfg_hash = _echo_config(cfg, out)

    filing_vectors = load_vectors(_require(run / "embed" / "filing_vectors.tsv"))
    kb_vectors = load_vectors(_require(run / "embed" / "kb_vectors.tsv"))
    tactics_frame = pd.read_csv(_require(run / "prep" / "kb_tactics.csv"), comment="#")
    by_ref = {
        (row.doc_id, row.index): row.tactic for row in tactics_frame.itertuples(index=False)
    }
    kb_tactics = [by_ref[v.paragraph_ref] for v in kb_vectors]
    super_frame = pd.read_csv(_require(run / "cluster" / "super_map.csv"), comment="#")
    super_map = dict(zip(super_frame["tactic"], super_frame["super_group"]))

    tokens_by_ref = {
        (row["doc_id"], int(row["index"])): row["tokens"]
        for row in _read_jsonl(run / "prep" / "filing_paragraphs.jsonl")
    }
    meta = pd.read_csv(_require(run / "prep" / "filing_meta.csv"), comment="#")
    meta_by_doc = {
        row.doc_id: (row.firm_id, row.filing_date) for row in meta.itertuples(index=False)
    }
    risk_words = load_risk_words()

    groups: dict[str, list] = {}
    for v in filing_vectors:
        groups.setdefault(v.paragraph_ref[0], []).append(v)

    records = []
    for doc_id in sorted(groups):
        if doc_id not in meta_by_doc:
            raise ValueError(f"filing vectors for unknown doc_id {doc_id!r}")
        vecs = sorted(groups[doc_id], key=lambda v: v.paragraph_ref)
        tokens = [tokens_by_ref[v.paragraph_ref] for v in vecs]
        scores = score_filing(
            tokens, vecs, kb_vectors, kb_tactics, super_map, risk_words, trim=cfg.trim
        )
        firm_id, filing_date = meta_by_doc[doc_id]
        records.append((firm_id, filing_date, scores))

    panel = build_score_panel(records)
    write_table(panel, out / "scores.csv", "score", cfg_hash)
    write_table(aggregate_yearly(panel), out / "yearly_summary.csv", "score", cfg_hash)
    logger.info("scored %d filings (%d rows)", len(records), len(panel))
    return 0


def cmd_sort(args: argparse.Namespace) -> int:
    from .ingest import load_returns_panel, load_score_panel
    from .portfolio import quantile_sort, sharpe

    run = _run_paths(args)
    cfg = _resolve_config(args)
    out = run / "sort"
    cfg_hash = _echo_config(cfg, out)

    returns_path = Path(args.returns) if args.returns else run / "data" / "returns.csv"
    scores_path = Path(args.scores) if args.scores else run / "score" / "scores.csv"
    panel = load_returns_panel(returns_path)
    scores = load_score_panel(scores_path)

    result = quantile_sort(
        panel, scores,
        n_bins=cfg.n_bins, score_kind=cfg.score_kind, monthly_weights=cfg.monthly_weights,
    )
    series = list(result.bins) + [result.spread()]
    long_rows = [
        (s.name, month, ret)
        for s in series
        for month, ret in zip(s.months, s.returns)
    ]
    write_table(
        pd.DataFrame(long_rows, columns=["series", "month", "return"]),
        out / "portfolios.csv", "sort", cfg_hash,
    )
    write_table(result.constituents, out / "constituents.csv", "sort", cfg_hash)
    summary = pd.DataFrame(
        [
            (
                s.name,
                len(s.months),
                float(s.returns.mean()),
                float(s.returns.std(ddof=1)),
                sharpe(s),
            )
            for s in series
        ],
        columns=["series", "n_months", "mean", "std", "sharpe"],
    )
    write_table(summary, out / "sort_summary.csv", "sort", cfg_hash)
    logger.info("sorted into %d bins over %d months", cfg.n_bins, len(result.bins[0].months))
    return 0


def cmd_alphas(args: argparse.Namespace) -> int:
    from .ingest import load_factor_panel
    from .portfolio import sharpe
    from .pricing import MODEL_FACTORS, ts_alpha

    run = _run_paths(args)
    cfg = _resolve_config(args)
    out = run / "alphas"
    cfg_hash = _echo_config(cfg, out)

    portfolios_path = (
        Path(args.portfolios) if args.portfolios else run / "sort" / "portfolios.csv"
    )
    factors_path = Path(args.factors) if args.factors else run / "data" / "factors.csv"
    series_map = _portfolio_series_map(portfolios_path)
    factors = load_factor_panel(factors_path)
    hac_lags = cfg.hac_lags if cfg.hac else None

    rows = []
    for name, series in series_map.items():
        sub = factors.reindex(series.index)
        if sub.isna().any().any():
            raise ValueError("factor panel does not cover the portfolio months")
        n = len(series)
        mean = float(series.mean())
        t_mean = mean / (float(series.std(ddof=1)) / np.sqrt(n))
        row = {"series": name, "n_months": n, "mean": mean, "t_mean": t_mean,
               "sharpe": sharpe(series.to_numpy())}
        for model in MODEL_FACTORS:
            fit = ts_alpha(series, sub, model, hac_lags=hac_lags)
            row[f"alpha_{model.lower()}"] = float(fit.params["alpha"])
            row[f"t_{model.lower()}"] = float(fit.t_stats["alpha"])
        rows.append(row)
    write_table(pd.DataFrame(rows), out / "alphas.csv", "alphas", cfg_hash)
    logger.info("alphas for %d series under %d models", len(rows), len(MODEL_FACTORS))
    return 0


_FM_MODELS: list[tuple[str, tuple[str, ...], bool]] = [
    ("M1", ("Mkt",), False),
    ("M2", (), True),
    ("M3", ("Mkt",), True),
    ("M4", ("Mkt", "SMB", "HML", "UMD"), True),
    ("M5", ("Mkt", "SMB", "HML", "CMA", "RMW"), True),
]


def cmd_fm(args: argparse.Namespace) -> int:
    from .ingest import load_factor_panel, load_returns_panel, load_score_panel
    from .pricing import fama_macbeth

    run = _run_paths(args)
    cfg = _resolve_config(args)
    out = run / "fm"
    cfg_hash = _echo_config(cfg, out)

    panel = load_returns_panel(
        Path(args.returns) if args.returns else run / "data" / "returns.csv"
    )
    scores = load_score_panel(
        Path(args.scores) if args.scores else run / "score" / "scores.csv"
    )
    factors = load_factor_panel(
        Path(args.factors) if args.factors else run / "data" / "factors.csv"
    )

    coef_rows = []
    summary_rows = []
    for label, model_factors, include_score in _FM_MODELS:
        result = fama_macbeth(
            panel, scores, factors,
            model_factors=model_factors,
            include_score=include_score,
            n_portfolios=cfg.fm_bins,
            window=cfg.beta_window,
            score_kind=cfg.score_kind,
        )
        for term in result.means.index:
            coef_rows.append(
                (
                    label, term,
                    float(result.means[term]),
                    float(result.std_errors[term]),
                    float(result.t_stats[term]),
                )
            )
        summary_rows.append(
            (
                label,
                "+".join(model_factors) if model_factors else "none",
                int(include_score),
                result.n_months,
                result.mean_r_squared_adj,
                result.mape,
                len(result.flagged_months),
            )
        )
    write_table(
        pd.DataFrame(coef_rows, columns=["model", "term", "estimate", "std_error", "t_stat"]),
        out / "fm.csv", "fm", cfg_hash,
    )
    write_table(
        pd.DataFrame(
            summary_rows,
            columns=["model", "factors", "includes_score", "n_months",
                     "mean_adj_r2", "mean_abs_error", "n_flagged_months"],
        ),
        out / "fm_summary.csv", "fm", cfg_hash,
    )
    logger.info("two-pass premia estimated for %d specifications", len(_FM_MODELS))
    return 0


def _characteristic_scores(panel: pd.DataFrame, column: str) -> pd.DataFrame:
    """Recast a monthly characteristic as a score panel for sorting."""
    rows = panel[["asset_id", "month", column]].dropna()
    return pd.DataFrame(
        {
            "firm_id": rows["asset_id"],
            "filing_date": rows["month"] + "-28",
            "score_kind": column,
            "value": rows[column].astype(float),
        }
    )


def cmd_grs(args: argparse.Namespace) -> int:
    from .ingest import load_factor_panel, load_returns_panel, load_score_panel
    from .portfolio import quantile_sort
    from .pricing import MODEL_FACTORS, grs_test

    run = _run_paths(args)
    cfg = _resolve_config(args)
    out = run / "grs"
    cfg_hash = _echo_config(cfg, out)

    panel = load_returns_panel(
        Path(args.returns) if args.returns else run / "data" / "returns.csv"
    )
    scores = load_score_panel(
        Path(args.scores) if args.scores else run / "score" / "scores.csv"
    )
    factors = load_factor_panel(
        Path(args.factors) if args.factors else run / "data" / "factors.csv"
    )

    score_sort = quantile_sort(panel, scores, n_bins=cfg.n_bins, score_kind=cfg.score_kind)
    cyber = score_sort.spread().to_series().rename("Cyber")

    sorts: list[tuple[str, object]] = [(f"score_{cfg.score_kind}", score_sort)]
    for column in ("size", "beta", "book_to_market"):
        if column not in panel.columns:
            logger.warning("returns panel lacks %r; sort skipped", column)
            continue
        char_panel = _characteristic_scores(panel, column)
        sorts.append(
            (column, quantile_sort(panel, char_panel, n_bins=cfg.n_bins, score_kind=column))
        )

    ff5 = list(MODEL_FACTORS["FF5"])
    rows = []
    for sort_name, sort_result in sorts:
        returns_frame = pd.concat([b.to_series() for b in sort_result.bins], axis=1)
        months = returns_frame.index
        base = factors.reindex(months)[ff5]
        if base.isna().any().any():
            raise ValueError("factor panel does not cover the portfolio months")
        models = [("FF5", base)]
        if sort_result is not score_sort:
            # The spread factor is a combination of the score-sorted bins,
            # so testing those bins against it would be degenerate.
            models.append(("FF5+Cyber", base.join(cyber.reindex(months))))
        for model_name, frame in models:
            if frame.isna().any().any():
                raise ValueError("cyber factor does not cover the portfolio months")
            result = grs_test(returns_frame, frame)
            rows.append(
                (
                    sort_name, model_name, result.statistic, result.p_value,
                    result.n_assets, result.n_factors, result.n_months,
                    result.mean_r_squared,
                )
            )
    write_table(
        pd.DataFrame(
            rows,
            columns=["sort", "model", "statistic", "p_value", "n_assets",
                     "n_factors", "n_months", "mean_r_squared"],
        ),
        out / "grs.csv", "grs", cfg_hash,
    )
    logger.info("joint alpha tests: %d sort/model pairs", len(rows))
    return 0


def cmd_bgrs(args: argparse.Namespace) -> int:
    from .ingest import load_factor_panel
    from .pricing import bs_posteriors

    run = _run_paths(args)
    cfg = _resolve_config(args)
    out = run / "bgrs"
    cfg_hash = _echo_config(cfg, out)

    factors = load_factor_panel(
        Path(args.factors) if args.factors else run / "data" / "factors.csv"
    )
    if args.candidates:
        candidates = [c.strip() for c in args.candidates.split(",") if c.strip()]
    else:
        candidates = [c for c in factors.columns if c not in ("Mkt", "rf")]

    if args.with_cyber:
        portfolios_path = (
            Path(args.portfolios) if args.portfolios else run / "sort" / "portfolios.csv"
        )
        series_map = _portfolio_series_map(portfolios_path)
        spread_name = [n for n in series_map if "-" in n]
        if not spread_name:
            raise ValueError("portfolios table has no long-short series")
        cyber = series_map[spread_name[0]].rename("Cyber")
        factors = factors.join(cyber, how="inner")
        candidates = candidates + ["Cyber"]

    posterior = bs_posteriors(
        factors, candidates,
        market_col="Mkt",
        prior_multiple=cfg.prior_multiple,
        k_mode=cfg.k_mode,
        expanding=cfg.expanding,
        min_months=cfg.min_bgrs_months,
    )
    table = posterior.probabilities.rename("probability").reset_index()
    table = table.sort_values(
        ["probability", "subset_id"], ascending=[False, True], kind="stable"
    ).reset_index(drop=True)
    write_table(table, out / "posteriors.csv", "bgrs", cfg_hash)
    if posterior.path is not None:
        write_table(posterior.path, out / "subset_path.csv", "bgrs", cfg_hash)
        write_table(posterior.factor_path, out / "factor_path.csv", "bgrs", cfg_hash)
    top = table.iloc[0]
    logger.info("top subset %s with posterior %.3f", top.subset_id, top.probability)
    return 0


def cmd_event(args: argparse.Namespace) -> int:
    from .events import car
    from .ingest import load_daily_returns
    from .portfolio import month_to_int, quarter_label, quarter_of

    run = _run_paths(args)
    cfg = _resolve_config(args)
    out = run / "event"
    cfg_hash = _echo_config(cfg, out)

    daily = load_daily_returns(
        Path(args.daily) if args.daily else run / "data" / "daily_returns.csv"
    )
    spec_path = Path(args.event_spec) if args.event_spec else run / "data" / "event.json"
    event_spec = json.loads(_require(spec_path).read_text(encoding="utf-8"))
    event_date = event_spec["event_date"]
    windows = tuple(tuple(w) for w in event_spec.get("windows", [[-1, 1], [-1, 3]]))
    estimation_days = int(event_spec.get("estimation_days", cfg.estimation_days))

    constituents = pd.read_csv(
        _require(Path(args.constituents) if args.constituents
                 else run / "sort" / "constituents.csv"),
        comment="#", dtype={"asset_id": str},
    )
    event_quarter = quarter_label(quarter_of(month_to_int(event_date[:7])))
    active = constituents[constituents["quarter"] == event_quarter]
    if active.empty:
        raise ValueError(f"no constituents for the event quarter {event_quarter}")

    wide = daily.pivot(index="date", columns="asset_id", values="return").sort_index()
    market_asset = args.market_asset
    if market_asset not in wide.columns:
        raise ValueError(f"market series {market_asset!r} missing from daily returns")
    market = wide[market_asset]

    def weighted_series(members: pd.DataFrame) -> pd.Series:
        cols = [a for a in members["asset_id"] if a in wide.columns]
        if not cols:
            raise ValueError("no daily returns for any portfolio member")
        weights = members.set_index("asset_id").loc[cols, "weight"]
        sub = wide[cols]
        mask = sub.notna()
        w = mask.mul(weights, axis=1)
        return (sub.fillna(0.0).mul(weights, axis=1)).sum(axis=1) / w.sum(axis=1)

    rows = []
    bin_series: dict[int, pd.Series] = {}
    for b, members in active.groupby("bin"):
        bin_series[int(b)] = weighted_series(members)
    low, high = min(bin_series), max(bin_series)
    named = [(f"P{b + 1}", series) for b, series in sorted(bin_series.items())]
    named.append((f"P{high + 1}-P{low + 1}", bin_series[high] - bin_series[low]))
    for name, series in named:
        for res in car(series, market, event_date, windows, estimation_days):
            rows.append(
                (
                    name, res.window[0], res.window[1], res.car, res.t_stat,
                    res.sigma_ar, res.n_days,
                )
            )
    write_table(
        pd.DataFrame(
            rows,
            columns=["series", "window_start", "window_end", "car", "t_stat",
                     "sigma_ar", "n_days"],
        ),
        out / "event_cars.csv", "event", cfg_hash,
    )
    logger.info("event study on %s across %d series", event_date, len(named))
    return 0


def cmd_welch(args: argparse.Namespace) -> int:
    from .events import welch_test

    run = _run_paths(args)
    cfg = _resolve_config(args)
    out = run / "welch"
    cfg_hash = _echo_config(cfg, out)

    path_a = Path(args.portfolios) if args.portfolios else run / "sort" / "portfolios.csv"
    path_b = Path(args.portfolios_b) if args.portfolios_b else path_a
    map_a = _portfolio_series_map(path_a)
    map_b = _portfolio_series_map(path_b)
    name_a = args.series_a or f"P{cfg.n_bins}"
    name_b = args.series_b or "P1"
    if name_a not in map_a:
        raise ValueError(f"series {name_a!r} not found in {path_a}")
    if name_b not in map_b:
        raise ValueError(f"series {name_b!r} not found in {path_b}")

    result = welch_test(map_a[name_a].to_numpy(), map_b[name_b].to_numpy())
    frame = pd.DataFrame(
        [
            (
                name_a, name_b, result.n_a, result.n_b, result.mean_a, result.mean_b,
                result.t_stat, result.p_value, result.dof,
            )
        ],
        columns=["series_a", "series_b", "n_a", "n_b", "mean_a", "mean_b",
                 "t_stat", "p_value", "dof"],
    )
    write_table(frame, out / "welch.csv", "welch", cfg_hash)
    logger.info("welch test %s vs %s: t=%.3f", name_a, name_b, result.t_stat)
    return 0


_REPORT_SECTIONS = [
    ("Text preparation", "prep/prep_summary.csv"),
    ("Embedding training loss", "embed/training_loss.csv"),
    ("Clustering method comparison", "cluster/clustering_report.csv"),
    ("Tactic to super-tactic map", "cluster/super_map.csv"),
    ("Yearly score summary", "score/yearly_summary.csv"),
    ("Portfolio summary", "sort/sort_summary.csv"),
    ("Alphas", "alphas/alphas.csv"),
    ("Two-pass premia", "fm/fm.csv"),
    ("Two-pass fit", "fm/fm_summary.csv"),
    ("Joint alpha tests", "grs/grs.csv"),
    ("Factor-subset posteriors", "bgrs/posteriors.csv"),
    ("Event-study CARs", "event/event_cars.csv"),
    ("Mean comparison", "welch/welch.csv"),
]


def cmd_report(args: argparse.Namespace) -> int:
    run = _run_paths(args)
    cfg = _resolve_config(args)
    cfg_hash = config_hash(cfg)

    chunks = [f"# produced-by: cyrisk report | config: {cfg_hash}\n"]
    for title, rel in _REPORT_SECTIONS:
        path = run / rel
        chunks.append(f"\n== {title} ==\n")
        if path.exists():
            chunks.append(path.read_text(encoding="utf-8"))
        else:
            chunks.append("(not produced)\n")
    out = Path(args.out) if args.out else run / "report.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(chunks), encoding="utf-8")
    logger.info("report written to %s", out)
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with RunConfig overrides")
    group = parser.add_argument_group("config overrides")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            group.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
        elif f.type == "int":
            group.add_argument(flag, type=int, default=None)
        elif f.type == "float":
            group.add_argument(flag, type=float, default=None)
        else:
            group.add_argument(flag, type=str, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyrisk",
        description="Cyber-risk text scores and the asset-pricing test battery.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name: str, func, help_text: str, *, seed: bool = False,
            config: bool = True) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--run", required=True, help="run directory")
        if seed:
            p.add_argument("--seed", type=int, required=True)
        if config:
            _add_config_flags(p)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic dataset with planted structure",
            seed=True, config=False)
    p.add_argument("--firms", type=int)
    p.add_argument("--months", type=int)
    p.add_argument("--kb-entries", type=int)
    p.add_argument("--paragraphs", type=int)
    p.add_argument("--start-month")

    p = add("prep", cmd_prep, "clean and segment filings and the knowledgebase")
    p.add_argument("--filings")
    p.add_argument("--kb")
    p.add_argument("--stopwords")
    p.add_argument("--common-words")
    p.add_argument("--index")

    add("embed", cmd_embed, "train paragraph vectors over the prepared corpus", seed=True)
    add("cluster", cmd_cluster, "cluster knowledgebase vectors into super-tactics", seed=True)
    add("score", cmd_score, "compute per-filing cyber scores")

    p = add("sort", cmd_sort, "build score-sorted value-weighted portfolios")
    p.add_argument("--returns")
    p.add_argument("--scores")

    p = add("alphas", cmd_alphas, "time-series alphas per portfolio bin")
    p.add_argument("--portfolios")
    p.add_argument("--factors")

    p = add("fm", cmd_fm, "two-pass cross-sectional premia")
    p.add_argument("--returns")
    p.add_argument("--scores")
    p.add_argument("--factors")

    p = add("grs", cmd_grs, "joint alpha tests per sort and factor set")
    p.add_argument("--returns")
    p.add_argument("--scores")
    p.add_argument("--factors")

    p = add("bgrs", cmd_bgrs, "Bayesian factor-subset posteriors")
    p.add_argument("--factors")
    p.add_argument("--candidates", help="comma-separated candidate factors")
    p.add_argument("--with-cyber", action="store_true",
                   help="append the sorted long-short series as a candidate")
    p.add_argument("--portfolios")

    p = add("event", cmd_event, "market-model event study on sorted bins")
    p.add_argument("--daily")
    p.add_argument("--event-spec")
    p.add_argument("--constituents")
    p.add_argument("--market-asset", default=MARKET_ASSET)

    p = add("welch", cmd_welch, "Welch mean comparison between two series")
    p.add_argument("--portfolios")
    p.add_argument("--portfolios-b")
    p.add_argument("--series-a")
    p.add_argument("--series-b")

    p = add("report", cmd_report, "concatenate produced tables into one report")
    p.add_argument("--out")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
