from __future__ import annotations

import json
from pathlib import Path

import pytest

from sumeta.cli import main

from conftest import FIXTURE_CORPUS

FAST_CONFIG = {
    "generator": {"population_size": 16, "generations": 6, "token_budget": 40},
    "pairs": 20000,
}

ANALYSIS_FILES = [
    "correlation_cumulative.csv",
    "correlation_noncumulative.csv",
    "disagreement_cumulative.csv",
    "disagreement_noncumulative.csv",
    "fn_ratio.csv",
    "fprime_ratio.csv",
]


def write_config(tmp_path, extra=None, name="config.json"):
    cfg = dict(FAST_CONFIG)
    if extra:
        cfg.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


def run(*argv):
    return main([str(a) for a in argv])


def run_pipeline(out, config, corpus=FIXTURE_CORPUS, seed=7):
    # the config hash covers the whole RunConfig, so every stage gets the
    # same flags (one shared --config file is the intended usage)
    base = ["--config", config, "--out", out, "--seed", seed]
    assert run("generate", "--corpus", corpus, *base) == 0
    assert run("score", "--corpus", corpus, *base) == 0
    assert run("properties", "--corpus", corpus, *base) == 0
    assert run("analyze", "--corpus", corpus, *base) == 0
    assert run("report", "--out", out) == 0


def all_artifacts(out: Path):
    names = ["candidates.jsonl", "scores.jsonl", "properties.csv",
             "scatter_eos.csv", "scatter_abstractiveness.csv", "scatter_coverage.csv",
             "report.md"] + ANALYSIS_FILES
    return {name: (out / name).read_bytes() for name in names}


class TestPipeline:
    def test_end_to_end_produces_every_artifact(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        run_pipeline(out, config)
        artifacts = all_artifacts(out)
        assert all(content for content in artifacts.values())
        report = (out / "report.md").read_text(encoding="utf-8")
        assert "Kendall's tau, cumulative bins" in report
        assert "config hash" in report

    def test_same_seed_is_byte_identical(self, tmp_path):
        config = write_config(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run_pipeline(out_a, config)
        run_pipeline(out_b, config)
        a, b = all_artifacts(out_a), all_artifacts(out_b)
        assert a == b

    def test_report_regeneration_is_byte_identical(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        run_pipeline(out, config)
        first = (out / "report.md").read_bytes()
        assert run("report", "--out", out) == 0
        assert (out / "report.md").read_bytes() == first

    def test_different_seed_changes_store(self, tmp_path):
        config = write_config(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run("generate", "--corpus", FIXTURE_CORPUS, "--config", config,
                   "--out", out_a, "--seed", 7) == 0
        assert run("generate", "--corpus", FIXTURE_CORPUS, "--config", config,
                   "--out", out_b, "--seed", 8) == 0
        assert (out_a / "candidates.jsonl").read_bytes() != (out_b / "candidates.jsonl").read_bytes()

    def test_rescoring_is_idempotent(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        base = ["--config", config, "--out", out, "--seed", 7]
        assert run("generate", "--corpus", FIXTURE_CORPUS, *base) == 0
        assert run("score", "--corpus", FIXTURE_CORPUS, *base) == 0
        first = (out / "scores.jsonl").read_bytes()
        assert run("score", "--corpus", FIXTURE_CORPUS, *base) == 0
        assert (out / "scores.jsonl").read_bytes() == first


class TestValidation:
    def test_generate_without_corpus_is_validation_error(self, tmp_path):
        assert run("generate", "--out", tmp_path / "x") == 1

    def test_score_without_store_is_io_error(self, tmp_path):
        code = run("score", "--corpus", FIXTURE_CORPUS, "--out", tmp_path / "empty")
        assert code == 2

    def test_missing_corpus_file_is_io_error(self, tmp_path):
        code = run("generate", "--corpus", tmp_path / "nope.jsonl", "--out", tmp_path / "x")
        assert code == 2

    def test_config_hash_mismatch_refused(self, tmp_path, capsys):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        assert run("generate", "--corpus", FIXTURE_CORPUS, "--config", config,
                   "--out", out, "--seed", 7) == 0
        code = run("score", "--corpus", FIXTURE_CORPUS, "--config", config,
                   "--out", out, "--seed", 8)
        assert code == 1
        assert "config hash" in capsys.readouterr().err

    def test_corpus_content_change_refused(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        corpus_copy = tmp_path / "corpus.jsonl"
        corpus_copy.write_bytes(FIXTURE_CORPUS.read_bytes())
        base = ["--config", config, "--out", out, "--seed", 7]
        assert run("generate", "--corpus", corpus_copy, *base) == 0
        text = corpus_copy.read_text(encoding="utf-8").replace("comet", "asteroid")
        corpus_copy.write_text(text, encoding="utf-8")
        assert run("score", "--corpus", corpus_copy, *base) == 1

    def test_report_before_analyze_is_io_error(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        base = ["--config", config, "--out", out, "--seed", 7]
        assert run("generate", "--corpus", FIXTURE_CORPUS, *base) == 0
        assert run("score", "--corpus", FIXTURE_CORPUS, *base) == 0
        assert run("report", "--out", out) == 2

    def test_unknown_metric_rejected(self, tmp_path):
        code = run("generate", "--corpus", FIXTURE_CORPUS, "--out", tmp_path / "x",
                   "--metrics", "R1,MadeUp")
        assert code == 1


class TestExternalScores:
    def prepare_store(self, tmp_path, config):
        out = tmp_path / "run"
        assert run("generate", "--corpus", FIXTURE_CORPUS, "--config", config,
                   "--out", out, "--seed", 7) == 0
        records = []
        with (out / "candidates.jsonl").open(encoding="utf-8") as fh:
            next(fh)  # meta line
            records = [json.loads(line) for line in fh]
        return out, records

    def write_scores(self, path, records, skip=0):
        lines = ["doc_id,candidate_id,score"]
        for i, rec in enumerate(records[: len(records) - skip]):
            lines.append(f"{rec['doc_id']},{rec['candidate_id']},{0.1 + (i % 9) / 10}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def test_external_column_joins_matrix(self, tmp_path):
        # external file paths are part of the config, so they go through it
        out_tmp = tmp_path
        config_path = write_config(out_tmp)
        out, records = self.prepare_store(out_tmp, config_path)
        ext = out_tmp / "bscore.csv"
        self.write_scores(ext, records)
        config_with_ext = write_config(
            out_tmp, extra={"external_scores": {"BScore": str(ext)}}, name="config_ext.json"
        )
        # regenerate under the extended config so hashes line up
        assert run("generate", "--corpus", FIXTURE_CORPUS, "--config", config_with_ext,
                   "--out", out_tmp / "run2", "--seed", 7) == 0
        assert run("score", "--corpus", FIXTURE_CORPUS, "--config", config_with_ext,
                   "--out", out_tmp / "run2", "--seed", 7) == 0
        meta_line = (out_tmp / "run2" / "scores.jsonl").read_text(encoding="utf-8").splitlines()[0]
        meta = json.loads(meta_line)["_meta"]
        assert meta["metrics"] == ["R1", "R2", "RL", "JS2", "BScore"]

    def test_missing_row_fails_naming_gap(self, tmp_path, capsys):
        config_path = write_config(tmp_path)
        out, records = self.prepare_store(tmp_path, config_path)
        ext = tmp_path / "bscore.csv"
        self.write_scores(ext, records, skip=1)
        config_with_ext = write_config(
            tmp_path, extra={"external_scores": {"BScore": str(ext)}}, name="config_ext.json"
        )
        assert run("generate", "--corpus", FIXTURE_CORPUS, "--config", config_with_ext,
                   "--out", tmp_path / "run2", "--seed", 7) == 0
        code = run("score", "--corpus", FIXTURE_CORPUS, "--config", config_with_ext,
                   "--out", tmp_path / "run2", "--seed", 7)
        assert code == 1
        assert "missing 1" in capsys.readouterr().err


class TestRandomBaseline:
    def test_baseline_needs_no_corpus(self, tmp_path):
        out = tmp_path / "baseline"
        config = write_config(
            tmp_path,
            extra={"baseline_docs": 20, "baseline_candidates": 30, "baseline_metrics": 5},
        )
        assert run("analyze", "--config", config, "--out", out,
                   "--random-baseline", "--seed", 3) == 0
        for name in ANALYSIS_FILES:
            assert (out / name).exists()
        assert run("report", "--out", out) == 0

    def test_baseline_deterministic(self, tmp_path):
        config = write_config(
            tmp_path, extra={"baseline_docs": 10, "baseline_candidates": 20, "baseline_metrics": 3}
        )
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert run("analyze", "--config", config, "--out", out,
                       "--random-baseline", "--seed", 3) == 0
        for name in ANALYSIS_FILES:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
