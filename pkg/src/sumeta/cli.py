"""Command-line pipeline: generate -> score -> properties -> analyze -> report.

Each stage writes its artifacts into the run directory given by ``--out`` and
validates the config hash of whatever upstream artifacts it consumes, so a
run directory always holds mutually consistent files. Exit codes: 0 success,
1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from itertools import combinations
from pathlib import Path

from . import SumetaError, __version__
from . import analysis, artifacts
from . import properties as props
from .config import ConfigError, RunConfig, load_config_file
from .corpus import load_corpus
from .generator import generate_all
from .metrics import load_external_scores, normalize, score_candidates

logger = logging.getLogger("sumeta")

STORE_FILE = "candidates.jsonl"
MATRIX_FILE = "scores.jsonl"
REPORT_FILE = "report.md"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sumeta",
        description="Meta-evaluation workbench for summarization metrics.",
    )
    parser.add_argument("--version", action="version", version=f"sumeta {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, corpus=False):
        p.add_argument("--config", type=Path, help="JSON run-config file; flags override it")
        p.add_argument("--out", type=Path, required=True, help="run directory for artifacts")
        p.add_argument("--seed", type=int, help="root seed (default 0)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes where supported")
        p.add_argument("--metrics", help="comma-separated native metrics (default R1,R2,RL,JS2)")
        if corpus:
            p.add_argument("--corpus", type=Path, help="JSONL corpus file")

    p = sub.add_parser("generate", help="evolve candidate pools per document")
    add_common(p, corpus=True)
    p.add_argument("--budget", type=int, help="token budget per candidate")

    p = sub.add_parser("score", help="score stored candidates under all metrics")
    add_common(p, corpus=True)
    p.add_argument(
        "--external-scores", action="append", default=[], metavar="NAME=PATH",
        help="merge an external metric column from a doc_id,candidate_id,score CSV",
    )

    p = sub.add_parser("properties", help="per-document properties and scatter data")
    add_common(p, corpus=True)
    p.add_argument("--alpha", type=float, help="significance level for per-document tau")

    p = sub.add_parser("analyze", help="correlation tables, disagreement and ratio curves")
    add_common(p, corpus=True)
    p.add_argument("--alpha", type=float, help="significance level for per-document tau")
    p.add_argument("--nbins", type=int, help="bins for disagreement and ratio curves")
    p.add_argument("--pairs", type=int, help="sampled summary pairs for disagreement")
    p.add_argument("--mode", choices=["cumulative", "noncumulative", "both"])
    p.add_argument("--random-baseline", action="store_true",
                   help="analyze a synthetic Uniform(0,1) matrix instead of a corpus")

    p = sub.add_parser("report", help="assemble a single summary document")
    add_common(p)

    return parser


def _parse_external(items) -> dict:
    out = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise ConfigError(f"--external-scores expects NAME=PATH, got {item!r}")
        if name in out:
            raise ConfigError(f"external metric {name!r} given twice")
        out[name] = path
    return out


def _build_config(args) -> RunConfig:
    base = load_config_file(args.config) if args.config else RunConfig()
    d = base.to_dict()
    if getattr(args, "corpus", None) is not None:
        d["corpus"] = str(args.corpus)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.metrics is not None:
        d["metrics"] = [m for m in args.metrics.split(",") if m]
    if getattr(args, "budget", None) is not None:
        d["generator"] = dict(d["generator"], token_budget=args.budget)
    for name in ("alpha", "nbins", "pairs", "mode"):
        value = getattr(args, name, None)
        if value is not None:
            d[name] = value
    if getattr(args, "external_scores", None):
        d["external_scores"] = _parse_external(args.external_scores)
    if getattr(args, "random_baseline", False):
        d["random_baseline"] = True
    return RunConfig.from_dict(d)


def _base_meta(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed, "config": cfg.to_dict()}


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing {what}: {path}")
    return path


def _load_corpus_for(cfg: RunConfig):
    if not cfg.corpus:
        raise ConfigError("no corpus configured (use --corpus or the config file)")
    path = _require(Path(cfg.corpus), "corpus file")
    return load_corpus(path, cfg.tokenizer), artifacts.file_sha256(path)


def _check_corpus_sha(meta: dict, corpus_sha: str, path) -> None:
    stored = meta.get("corpus_sha256")
    if stored is not None and stored != corpus_sha:
        raise artifacts.ArtifactError(
            f"{path}: corpus content changed since this artifact was written"
        )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> None:
    cfg = _build_config(args)
    corpus, corpus_sha = _load_corpus_for(cfg)
    store = generate_all(corpus, cfg.metrics, cfg.generator, jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    meta = dict(_base_meta(cfg), corpus_sha256=corpus_sha)
    artifacts.write_store(args.out / STORE_FILE, store, meta)
    for doc_id, cands in store.candidates.items():
        pre = sum(len(v) for v in store.provenance[doc_id].values())
        logger.info("doc %s: %d unique candidates (dedup ratio %.2f)",
                    doc_id, len(cands), len(cands) / pre if pre else 1.0)
    logger.info("wrote %s (%d candidates, %d docs, %d skipped)",
                args.out / STORE_FILE, store.total_candidates(),
                len(store.candidates), len(store.skipped))


def cmd_score(args) -> None:
    cfg = _build_config(args)
    corpus, corpus_sha = _load_corpus_for(cfg)
    store_path = _require(args.out / STORE_FILE, "candidate store")
    meta, store = artifacts.read_store(store_path)
    artifacts.check_hash(meta, cfg.config_hash(), store_path)
    _check_corpus_sha(meta, corpus_sha, store_path)
    matrix = score_candidates(corpus, store.candidates, cfg.metrics)
    for name in sorted(cfg.external_scores):
        path = _require(Path(cfg.external_scores[name]), f"external score file for {name}")
        load_external_scores(path, name, matrix)
    normalize(matrix)
    out_meta = dict(_base_meta(cfg), corpus_sha256=corpus_sha,
                    external=sorted(cfg.external_scores))
    artifacts.write_matrix(args.out / MATRIX_FILE, matrix, out_meta)
    n_cands = sum(d.n_candidates for d in matrix.docs.values())
    logger.info("wrote %s (%d docs x %d metrics, %d candidates)",
                args.out / MATRIX_FILE, len(matrix.docs), matrix.n_metrics, n_cands)


def cmd_properties(args) -> None:
    cfg = _build_config(args)
    corpus, corpus_sha = _load_corpus_for(cfg)
    matrix_path = _require(args.out / MATRIX_FILE, "score matrix")
    meta, matrix = artifacts.read_matrix(matrix_path)
    artifacts.check_hash(meta, cfg.config_hash(), matrix_path)
    _check_corpus_sha(meta, corpus_sha, matrix_path)

    records = props.compute_properties(corpus, matrix)
    base = _base_meta(cfg)
    artifacts.write_csv(
        args.out / "properties.csv", base,
        ["doc_id", "eos", "abstractiveness", "coverage"],
        [[r.doc_id, r.eos, r.abstractiveness, r.coverage] for r in records],
    )
    pairs = list(combinations(matrix.metrics, 2))
    for prop_name in props.PROPERTY_NAMES:
        rows_out = []
        omitted = {}
        for a, b in pairs:
            rows, n_omitted = props.property_scatter(
                corpus, matrix, prop_name, (a, b), alpha=cfg.alpha
            )
            omitted[f"{a}/{b}"] = n_omitted
            for r in rows:
                rows_out.append([a, b, r.doc_id, r.value, r.tau, r.trend])
        artifacts.write_csv(
            args.out / f"scatter_{prop_name}.csv",
            dict(base, omitted=omitted),
            ["metric_a", "metric_b", "doc_id", prop_name, "tau", "trend"],
            rows_out,
        )
    logger.info("wrote properties.csv and scatter files for %d metric pairs", len(pairs))


def _analysis_matrix(args, cfg: RunConfig):
    if cfg.random_baseline:
        matrix = analysis.random_metric_baseline(
            cfg.baseline_docs, cfg.baseline_candidates, cfg.baseline_metrics, cfg.seed
        )
        normalize(matrix)
        args.out.mkdir(parents=True, exist_ok=True)
        meta = dict(_base_meta(cfg), random_baseline=True)
        artifacts.write_matrix(args.out / MATRIX_FILE, matrix, meta)
        return matrix
    matrix_path = _require(args.out / MATRIX_FILE, "score matrix")
    meta, matrix = artifacts.read_matrix(matrix_path)
    artifacts.check_hash(meta, cfg.config_hash(), matrix_path)
    return matrix


def cmd_analyze(args) -> None:
    cfg = _build_config(args)
    matrix = _analysis_matrix(args, cfg)
    base = _base_meta(cfg)
    modes = ["cumulative", "noncumulative"] if cfg.mode == "both" else [cfg.mode]

    bins = analysis.bin_summaries(matrix)
    for mode in modes:
        table = analysis.correlation_table(matrix, bins, mode=mode, alpha=cfg.alpha)
        rows = []
        for a, b in combinations(matrix.metrics, 2):
            for spec in table.bin_specs:
                r = table.get(a, b, spec)
                rows.append([a, b, spec, r.mean_tau, r.n_docs, r.n_dropped, r.n_skipped])
        artifacts.write_csv(
            args.out / f"correlation_{mode}.csv", dict(base, mode=mode),
            ["metric_a", "metric_b", "bin_spec", "mean_tau", "n_docs", "n_dropped", "n_skipped"],
            rows,
        )

        dis_rows = []
        for anchor in matrix.metrics:
            curves = analysis.disagreement(
                matrix, anchor, pairs=cfg.pairs, nbins=cfg.nbins, mode=mode, seed=cfg.seed
            )
            for other in matrix.metrics:
                if other == anchor:
                    continue
                curve = curves[other]
                for x, v, c in zip(curve.x, curve.values, curve.counts):
                    dis_rows.append([anchor, other, x, v, c])
        artifacts.write_csv(
            args.out / f"disagreement_{mode}.csv", dict(base, mode=mode),
            ["anchor_metric", "other_metric", "threshold_or_center", "value", "count"],
            dis_rows,
        )

    for name, fn in (("fn_ratio", analysis.fn_ratio), ("fprime_ratio", analysis.fprime_ratio)):
        curve = fn(matrix, nbins=cfg.nbins)
        artifacts.write_csv(
            args.out / f"{name}.csv", base,
            ["threshold_or_center", "value", "count"],
            [[x, v, c] for x, v, c in zip(curve.x, curve.values, curve.counts)],
        )
    logger.info("wrote analysis outputs for modes: %s", ", ".join(modes))


def _md_escape(v) -> str:
    return artifacts.fmt_value(v) or "-"


def _correlation_section(lines, path, title) -> None:
    meta, header, rows = artifacts.read_csv(path)
    specs = []
    for r in rows:
        if r[2] not in specs:
            specs.append(r[2])
    lines.append(f"### {title}")
    lines.append("")
    lines.append("| metric pair | " + " | ".join(specs) + " |")
    lines.append("|---" * (len(specs) + 1) + "|")
    by_pair: dict = {}
    for a, b, spec, mean_tau, n_docs, _, _ in rows:
        by_pair.setdefault((a, b), {})[spec] = (mean_tau, n_docs)
    for (a, b), cells in by_pair.items():
        row = [f"{a} vs {b}"]
        for spec in specs:
            tau, n = cells.get(spec, ("", "0"))
            row.append(f"{tau or 'n/a'} (n={n})")
        lines.append("| " + " | ".join(row) + " |")
    lines.append("")


def _curve_section(lines, path, title, id_cols) -> None:
    meta, header, rows = artifacts.read_csv(path)
    lines.append(f"### {title}")
    lines.append("")
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|---" * len(header) + "|")
    for row in rows:
        lines.append("| " + " | ".join(v if v != "" else "-" for v in row) + " |")
    lines.append("")


def cmd_report(args) -> None:
    out: Path = args.out
    matrix_path = _require(out / MATRIX_FILE, "score matrix")
    meta, matrix = artifacts.read_matrix(matrix_path)

    lines = ["# sumeta run report", ""]
    lines.append(f"- config hash: `{meta['config_hash']}`")
    lines.append(f"- seed: {meta['seed']}")
    n_cands = sum(d.n_candidates for d in matrix.docs.values())
    lines.append(f"- documents: {len(matrix.docs)}, candidates: {n_cands}, "
                 f"metrics: {', '.join(matrix.metrics)}")
    lines.append("")
    lines.append("## Configuration")
    lines.append("")
    lines.append("```json")
    lines.append(json.dumps(meta.get("config", {}), indent=2, sort_keys=True))
    lines.append("```")
    lines.append("")

    found_any = False
    lines.append("## Inter-metric correlation")
    lines.append("")
    for mode in ("cumulative", "noncumulative"):
        path = out / f"correlation_{mode}.csv"
        if path.exists():
            _correlation_section(lines, path, f"Kendall's tau, {mode} bins")
            found_any = True
    for mode in ("cumulative", "noncumulative"):
        path = out / f"disagreement_{mode}.csv"
        if path.exists():
            _curve_section(lines, path, f"Disagreement ({mode} bins)", 2)
            found_any = True
    for name, title in (("fn_ratio", "F/N ratio"), ("fprime_ratio", "F'/N ratio")):
        path = out / f"{name}.csv"
        if path.exists():
            _curve_section(lines, path, title, 0)
            found_any = True
    if not found_any:
        raise FileNotFoundError(f"missing analysis outputs in {out}; run `sumeta analyze` first")

    prop_path = out / "properties.csv"
    if prop_path.exists():
        lines.append("## Reference properties")
        lines.append("")
        _, header, rows = artifacts.read_csv(prop_path)
        lines.append("| " + " | ".join(header) + " |")
        lines.append("|---" * len(header) + "|")
        for row in rows:
            lines.append("| " + " | ".join(v if v != "" else "-" for v in row) + " |")
        lines.append("")
        for prop_name in props.PROPERTY_NAMES:
            spath = out / f"scatter_{prop_name}.csv"
            if spath.exists():
                smeta, _, srows = artifacts.read_csv(spath)
                lines.append(
                    f"- scatter `{spath.name}`: {len(srows)} significant points; "
                    f"omitted per pair: {json.dumps(smeta.get('omitted', {}), sort_keys=True)}"
                )
        lines.append("")

    (out / REPORT_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("wrote %s", out / REPORT_FILE)


# ---------------------------------------------------------------------------

_COMMANDS = {
    "generate": cmd_generate,
    "score": cmd_score,
    "properties": cmd_properties,
    "analyze": cmd_analyze,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        if args.command != "report":
            args.out.mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.command](args)
    except SumetaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
