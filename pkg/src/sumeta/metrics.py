"""Lexical summary metrics and the per-document score matrix.

Native metrics (all recall-oriented, all in [0,1], higher is better):

* ``R1`` / ``R2`` - clipped unigram / bigram recall against the reference.
* ``RL`` - longest-common-subsequence length divided by reference length.
* ``JS2`` - one minus the Jensen-Shannon divergence (base-2 logs, equal-weight
  mixture) between the two texts' bigram distributions. The flip makes the
  score higher-is-better so its ranking orientation matches the other metrics.

Neural metrics are not computed here; their scores are merged from external
files (``doc_id,candidate_id,score`` CSV) via :func:`load_external_scores`.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import SumetaError
from .corpus import Corpus, ngrams

logger = logging.getLogger(__name__)


class MetricError(SumetaError):
    pass


# ---------------------------------------------------------------------------
# metric functions
# ---------------------------------------------------------------------------

def rouge_n(candidate_tokens, reference_tokens, n: int) -> float:
    """Clipped n-gram recall: sum_g min(cand(g), ref(g)) / total reference n-grams."""
    ref_bag = ngrams(reference_tokens, n)
    if ref_bag.total == 0:
        raise MetricError(f"reference yields no {n}-grams; recall is undefined")
    cand_bag = ngrams(candidate_tokens, n)
    ref_counts = ref_bag.counts
    overlap = 0
    for gram, count in cand_bag.counts.items():
        ref_count = ref_counts.get(gram)
        if ref_count:
            overlap += count if count < ref_count else ref_count
    return overlap / ref_bag.total


def rouge_1(candidate_tokens, reference_tokens) -> float:
    return rouge_n(candidate_tokens, reference_tokens, 1)


def rouge_2(candidate_tokens, reference_tokens) -> float:
    return rouge_n(candidate_tokens, reference_tokens, 2)


def _lcs_length(a, b) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    cur = [0] * (len(b) + 1)
    for x in a:
        left = 0
        for j, y in enumerate(b, 1):
            if x == y:
                left = prev[j - 1] + 1
            else:
                up = prev[j]
                if left < up:
                    left = up
            cur[j] = left
        prev, cur = cur, prev
    return prev[len(b)]


def _reduce_to_shared(a, b):
    # Tokens absent from the other sequence can never join a common
    # subsequence, so dropping them leaves the LCS length unchanged.
    vocab_b = set(b)
    a2 = [t for t in a if t in vocab_b]
    vocab_a = set(a2)
    b2 = [t for t in b if t in vocab_a]
    return a2, b2


def rouge_l(candidate_tokens, reference_tokens) -> float:
    """LCS(candidate, reference) / |reference| (recall orientation)."""
    ref = list(reference_tokens)
    if not ref:
        raise MetricError("reference is empty; ROUGE-L recall is undefined")
    a, b = _reduce_to_shared(list(candidate_tokens), ref)
    return _lcs_length(a, b) / len(ref)


def _jsd_base2(p_counts, p_total, q_counts, q_total) -> float:
    jsd = 0.0
    for gram, c in p_counts.items():
        p = c / p_total
        q = q_counts.get(gram, 0) / q_total
        m = 0.5 * (p + q)
        jsd += 0.5 * p * math.log2(p / m)
        if q:
            jsd += 0.5 * q * math.log2(q / m)
    for gram, c in q_counts.items():
        if gram in p_counts:
            continue
        q = c / q_total
        jsd += 0.5 * q  # m = q/2, so the term is 0.5*q*log2(2) = 0.5*q
    return jsd


def js2(candidate_tokens, reference_tokens) -> float:
    """1 - JSD(P||Q) over bigram distributions, base-2 logs, M = (P+Q)/2."""
    p = ngrams(candidate_tokens, 2)
    q = ngrams(reference_tokens, 2)
    if p.total == 0 or q.total == 0:
        raise MetricError("JS-2 needs at least one bigram on each side")
    score = 1.0 - _jsd_base2(p.counts, p.total, q.counts, q.total)
    return min(1.0, max(0.0, score))


NATIVE_METRICS = {
    "R1": rouge_1,
    "R2": rouge_2,
    "RL": rouge_l,
    "JS2": js2,
}


def make_scorer(metric_name: str, reference_tokens):
    """Bind a native metric to one reference and precompute its structures.

    Returns ``candidate_tokens -> float``. Reference-side preconditions are
    checked here and raise; a candidate too short to produce the required
    n-grams scores 0.0 (no overlap) instead of raising, so bulk scoring and
    generation never die on a one-token candidate.
    """
    if metric_name not in NATIVE_METRICS:
        raise MetricError(f"unknown native metric {metric_name!r}")

    if metric_name in ("R1", "R2"):
        n = 1 if metric_name == "R1" else 2
        ref_bag = ngrams(reference_tokens, n)
        if ref_bag.total == 0:
            raise MetricError(f"reference yields no {n}-grams; recall is undefined")
        ref_counts, ref_total = ref_bag.counts, ref_bag.total

        def score(cand_tokens):
            overlap = 0
            bag = ngrams(cand_tokens, n)
            for gram, count in bag.counts.items():
                rc = ref_counts.get(gram)
                if rc:
                    overlap += count if count < rc else rc
            return overlap / ref_total

        return score

    if metric_name == "RL":
        ref = list(reference_tokens)
        if not ref:
            raise MetricError("reference is empty; ROUGE-L recall is undefined")
        ref_vocab = set(ref)
        ref_len = len(ref)

        def score(cand_tokens):
            a = [t for t in cand_tokens if t in ref_vocab]
            if not a:
                return 0.0
            vocab_a = set(a)
            b = [t for t in ref if t in vocab_a]
            return _lcs_length(a, b) / ref_len

        return score

    # JS2
    q = ngrams(reference_tokens, 2)
    if q.total == 0:
        raise MetricError("JS-2 needs at least one bigram on each side")
    q_counts, q_total = q.counts, q.total

    def score(cand_tokens):
        p = ngrams(cand_tokens, 2)
        if p.total == 0:
            return 0.0
        val = 1.0 - _jsd_base2(p.counts, p.total, q_counts, q_total)
        return min(1.0, max(0.0, val))

    return score


# ---------------------------------------------------------------------------
# score matrix
# ---------------------------------------------------------------------------

@dataclass
class DocScores:
    doc_id: str
    candidate_ids: list[str]
    raw: np.ndarray                       # (n_candidates, n_metrics)
    normalized: np.ndarray | None = None
    mean_normalized: np.ndarray | None = None

    def __post_init__(self):
        self._index = {c: i for i, c in enumerate(self.candidate_ids)}

    def row(self, candidate_id: str) -> int:
        return self._index[candidate_id]

    @property
    def n_candidates(self) -> int:
        return len(self.candidate_ids)


class ScoreMatrix:
    """Per-document candidate x metric score table.

    Metric names are unique and ordered; every analysis expects the matrix to
    be rectangular (a raw value for every candidate under every metric).
    """

    def __init__(self, metrics):
        names = list(metrics)
        if len(set(names)) != len(names):
            raise MetricError("metric names must be unique within a matrix")
        self.metrics: list[str] = names
        self.docs: dict[str, DocScores] = {}

    @property
    def n_metrics(self) -> int:
        return len(self.metrics)

    def metric_index(self, name: str) -> int:
        try:
            return self.metrics.index(name)
        except ValueError:
            raise MetricError(f"metric {name!r} is not registered") from None

    def add_document(self, doc_id: str, candidate_ids, raw: np.ndarray) -> None:
        if doc_id in self.docs:
            raise MetricError(f"duplicate document {doc_id!r} in matrix")
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (len(candidate_ids), self.n_metrics):
            raise MetricError(
                f"score block for {doc_id!r} has shape {raw.shape}, "
                f"expected {(len(candidate_ids), self.n_metrics)}"
            )
        self.docs[doc_id] = DocScores(doc_id, list(candidate_ids), raw)

    def doc_ids(self) -> list[str]:
        return list(self.docs)

    def raw_score(self, doc_id: str, candidate_id: str, metric: str) -> float:
        d = self.docs[doc_id]
        return float(d.raw[d.row(candidate_id), self.metric_index(metric)])

    def normalized_score(self, doc_id: str, candidate_id: str, metric: str) -> float:
        d = self.docs[doc_id]
        if d.normalized is None:
            raise MetricError("matrix is not normalized yet")
        return float(d.normalized[d.row(candidate_id), self.metric_index(metric)])

    @property
    def is_normalized(self) -> bool:
        return all(d.normalized is not None for d in self.docs.values())

    def validate_rectangular(self) -> None:
        gaps = []
        for d in self.docs.values():
            nan_rows = np.isnan(d.raw)
            if nan_rows.any():
                for ci, mi in zip(*np.nonzero(nan_rows)):
                    gaps.append((d.doc_id, d.candidate_ids[ci], self.metrics[mi]))
        if gaps:
            head = ", ".join(f"{d}/{c}/{m}" for d, c, m in gaps[:5])
            raise MetricError(f"matrix has {len(gaps)} missing score(s): {head}")

    def copy(self) -> "ScoreMatrix":
        out = ScoreMatrix(self.metrics)
        for d in self.docs.values():
            out.docs[d.doc_id] = DocScores(
                d.doc_id,
                list(d.candidate_ids),
                d.raw.copy(),
                None if d.normalized is None else d.normalized.copy(),
                None if d.mean_normalized is None else d.mean_normalized.copy(),
            )
        return out


def score_candidates(corpus: Corpus, candidates_by_doc, metric_names) -> ScoreMatrix:
    """Score every stored candidate under every native metric in ``metric_names``.

    ``candidates_by_doc`` maps doc_id to candidate objects carrying
    ``candidate_id`` and ``sentence_indices``.
    """
    for name in metric_names:
        if name not in NATIVE_METRICS:
            raise MetricError(f"unknown native metric {name!r}")
    matrix = ScoreMatrix(metric_names)
    for doc_id, cands in candidates_by_doc.items():
        doc = corpus.documents.get(doc_id)
        if doc is None:
            raise MetricError(f"candidate store references unknown document {doc_id!r}")
        ref = corpus.references[doc_id]
        scorers = [make_scorer(name, ref.tokens) for name in metric_names]
        raw = np.empty((len(cands), len(metric_names)), dtype=float)
        for ci, cand in enumerate(cands):
            toks = [t for i in cand.sentence_indices for t in doc.token_cache[i]]
            for mi, scorer in enumerate(scorers):
                raw[ci, mi] = scorer(toks)
        matrix.add_document(doc_id, [c.candidate_id for c in cands], raw)
    matrix.validate_rectangular()
    return matrix


def load_external_scores(path, metric_name: str, matrix: ScoreMatrix) -> ScoreMatrix:
    """Merge an externally computed metric column into the matrix.

    The file is CSV with header ``doc_id,candidate_id,score``. Every
    (document, candidate) cell must be covered; unknown candidates are an
    error, duplicates are last-write-wins with a warning.
    """
    if metric_name in matrix.metrics:
        raise MetricError(f"metric {metric_name!r} is already registered")
    path = Path(path)
    values: dict[tuple[str, str], float] = {}
    duplicates = 0
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"doc_id", "candidate_id", "score"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise MetricError(
                f"{path}: expected header doc_id,candidate_id,score, got {reader.fieldnames}"
            )
        for row_no, row in enumerate(reader, start=2):
            doc_id, cand_id = row["doc_id"], row["candidate_id"]
            doc = matrix.docs.get(doc_id)
            if doc is None or cand_id not in doc._index:
                raise MetricError(
                    f"{path} row {row_no}: unknown candidate {doc_id!r}/{cand_id!r}"
                )
            try:
                score = float(row["score"])
            except ValueError:
                raise MetricError(f"{path} row {row_no}: score {row['score']!r} is not a number") from None
            if (doc_id, cand_id) in values:
                duplicates += 1
            values[(doc_id, cand_id)] = score
    if duplicates:
        logger.warning("%s: %d duplicate row(s); last value wins", path, duplicates)

    missing = 0
    for d in matrix.docs.values():
        for cand_id in d.candidate_ids:
            if (d.doc_id, cand_id) not in values:
                missing += 1
    if missing:
        raise MetricError(
            f"{path}: metric {metric_name!r} is missing {missing} candidate score(s)"
        )

    matrix.metrics.append(metric_name)
    for d in matrix.docs.values():
        col = np.array([[values[(d.doc_id, c)]] for c in d.candidate_ids], dtype=float)
        d.raw = np.hstack([d.raw, col])
        d.normalized = None
        d.mean_normalized = None
    matrix.validate_rectangular()
    return matrix


def normalize(matrix: ScoreMatrix) -> ScoreMatrix:
    """Per-document, per-metric min-max rescaling onto [0,1].

    A degenerate column (max == min) maps to 0.5 everywhere so the mean
    across metrics stays defined. Requires at least two candidates per
    document. Fills ``normalized`` and ``mean_normalized`` in place.
    """
    matrix.validate_rectangular()
    for d in matrix.docs.values():
        if d.n_candidates < 2:
            raise MetricError(
                f"document {d.doc_id!r} has {d.n_candidates} candidate(s); need >= 2 to normalize"
            )
        lo = d.raw.min(axis=0)
        hi = d.raw.max(axis=0)
        span = hi - lo
        norm = np.empty_like(d.raw)
        for mi in range(matrix.n_metrics):
            if span[mi] > 0:
                norm[:, mi] = (d.raw[:, mi] - lo[mi]) / span[mi]
            else:
                norm[:, mi] = 0.5
        d.normalized = norm
        d.mean_normalized = norm.mean(axis=1)
    return matrix
