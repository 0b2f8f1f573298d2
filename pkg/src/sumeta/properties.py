"""Document/reference properties that interact with inter-metric agreement.

Three per-document quantities:

* ease of summarization - mean over metrics of the best score any candidate
  achieved for the document;
* abstractiveness - fraction of the reference vocabulary absent from the
  document;
* coverage - fraction of reference tokens lying inside extractive fragments,
  the maximal contiguous token runs shared with the document (greedy
  longest-match scan).

Plus the scatter emission pairing a property value with the per-document
inter-metric tau, including a moving-average trend column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import SumetaError
from .analysis import document_tau
from .corpus import Corpus, Document, Reference
from .metrics import ScoreMatrix

PROPERTY_NAMES = ("eos", "abstractiveness", "coverage")


class PropertyError(SumetaError):
    pass


@dataclass(frozen=True)
class Fragment:
    start_in_reference: int
    length: int


@dataclass(frozen=True)
class PropertyRecord:
    doc_id: str
    eos: float
    abstractiveness: float
    coverage: float


def eos(matrix: ScoreMatrix, doc_id: str, use_range_normalization: bool = True) -> float:
    """Mean over metrics of the maximum score any candidate received.

    By default the maxima are taken over raw scores, which for the native
    metrics already live on their theoretical [0,1] range. Under strict
    per-document min-max normalization every per-metric maximum is 1.0 by
    construction, which collapses the property; pass
    ``use_range_normalization=False`` to get that behaviour anyway.
    """
    doc = matrix.docs.get(doc_id)
    if doc is None:
        raise PropertyError(f"unknown document {doc_id!r}")
    if doc.n_candidates < 1:
        raise PropertyError(f"document {doc_id!r} has an empty candidate pool")
    if use_range_normalization:
        scores = doc.raw
    else:
        if doc.normalized is None:
            raise PropertyError("matrix is not normalized")
        scores = doc.normalized
    return float(scores.max(axis=0).mean())


def abstractiveness(doc: Document, ref: Reference) -> float:
    """1 minus the fraction of reference vocabulary appearing in the document."""
    ref_vocab = ref.vocab
    if not ref_vocab:
        raise PropertyError(f"reference for {doc.id!r} has an empty vocabulary")
    overlap = len(doc.vocab & ref_vocab)
    return 1.0 - overlap / len(ref_vocab)


def extractive_fragments(doc_tokens, ref_tokens) -> list[Fragment]:
    """Greedy left-to-right scan of the reference for shared contiguous runs.

    At each reference position the longest document match starting there
    becomes a fragment and the scan jumps past it; unmatched tokens advance
    by one. Ties in match length resolve to the earliest document position
    (the fragment itself is position-independent).
    """
    doc = list(doc_tokens)
    ref = list(ref_tokens)
    starts: dict = {}
    for j, tok in enumerate(doc):
        starts.setdefault(tok, []).append(j)
    fragments = []
    i = 0
    while i < len(ref):
        best = 0
        for j in starts.get(ref[i], ()):
            k = 0
            while i + k < len(ref) and j + k < len(doc) and ref[i + k] == doc[j + k]:
                k += 1
            if k > best:
                best = k
        if best > 0:
            fragments.append(Fragment(start_in_reference=i, length=best))
            i += best
        else:
            i += 1
    return fragments


def coverage(doc: Document, ref: Reference) -> float:
    """Fraction of reference tokens covered by extractive fragments."""
    if not ref.tokens:
        raise PropertyError(f"reference for {doc.id!r} is empty")
    fragments = extractive_fragments(doc.all_tokens, ref.tokens)
    return sum(f.length for f in fragments) / len(ref.tokens)


def compute_properties(corpus: Corpus, matrix: ScoreMatrix) -> list[PropertyRecord]:
    """One record per scored document, in matrix order."""
    out = []
    for doc_id in matrix.doc_ids():
        doc = corpus.documents.get(doc_id)
        if doc is None:
            raise PropertyError(f"matrix references unknown document {doc_id!r}")
        ref = corpus.references[doc_id]
        out.append(
            PropertyRecord(
                doc_id=doc_id,
                eos=eos(matrix, doc_id),
                abstractiveness=abstractiveness(doc, ref),
                coverage=coverage(doc, ref),
            )
        )
    return out


def moving_average(values, window: int) -> list[float]:
    """Trailing mean; NaN until the window fills (first value at index window-1)."""
    if window < 1:
        raise PropertyError("window must be >= 1")
    out = []
    acc = 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= window:
            acc -= values[i - window]
        out.append(acc / window if i >= window - 1 else math.nan)
    return out


@dataclass(frozen=True)
class ScatterRow:
    doc_id: str
    value: float   # property value (x axis)
    tau: float     # per-document inter-metric tau (y axis)
    trend: float   # trailing moving average of tau, NaN until the window fills


def property_scatter(corpus: Corpus, matrix: ScoreMatrix, property_name: str,
                     metric_pair, alpha: float = 0.05, window: int | None = None):
    """Rows of (doc, property value, tau) for one metric pair, sorted by the
    property value, with a moving-average trend column.

    Documents whose tau over the full pool is degenerate or not significant
    at ``alpha`` are omitted and counted. The default trend window is 10
    points for small corpora and 100 once at least 1000 documents survive.
    Returns ``(rows, n_omitted)``.
    """
    if property_name not in PROPERTY_NAMES:
        raise PropertyError(f"unknown property {property_name!r}")
    metric_a, metric_b = metric_pair
    taus = document_tau(matrix, metric_a, metric_b)

    points = []
    omitted = 0
    for doc_id in matrix.doc_ids():
        res = taus.get(doc_id)
        if res is None or res.degenerate or res.p_value >= alpha:
            omitted += 1
            continue
        doc = corpus.documents.get(doc_id)
        if doc is None:
            raise PropertyError(f"matrix references unknown document {doc_id!r}")
        ref = corpus.references[doc_id]
        if property_name == "eos":
            value = eos(matrix, doc_id)
        elif property_name == "abstractiveness":
            value = abstractiveness(doc, ref)
        else:
            value = coverage(doc, ref)
        points.append((value, doc_id, res.tau))

    points.sort(key=lambda p: (p[0], p[1]))
    if window is None:
        window = 10 if len(points) < 1000 else 100
    trend = moving_average([p[2] for p in points], window)
    rows = [
        ScatterRow(doc_id=d, value=v, tau=t, trend=tr)
        for (v, d, t), tr in zip(points, trend)
    ]
    return rows, omitted
