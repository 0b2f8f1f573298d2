"""Inter-metric agreement analyses.

Everything here consumes a rectangular :class:`~sumeta.metrics.ScoreMatrix`:
Kendall's tau (tie-corrected tau-b) per document, scoring-range binning into
equal-width thirds (L/M/T), cumulative and non-cumulative correlation tables,
pairwise disagreement curves, F/N and F'/N ratio curves, and a synthetic
Uniform(0,1) random-metric matrix used as a null baseline.

Order comparisons between candidates are always made on raw scores, and the
normalized matrix supplies only binning keys. Consequently every aggregate is
invariant under strictly increasing transforms of any single metric's raw
column (given a fixed binning), which is what makes rank-based meta-evaluation
meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import SumetaError
from .metrics import ScoreMatrix
from .seeding import make_rng, rand_index

LABELS = ("L", "M", "T")
CUMULATIVE_SPECS = ("L+M+T", "M+T", "T")
NONCUMULATIVE_SPECS = ("L", "M", "T")

_SPEC_LABELS = {
    "L+M+T": frozenset(LABELS),
    "M+T": frozenset(("M", "T")),
    "T": frozenset(("T",)),
    "L": frozenset(("L",)),
    "M": frozenset(("M",)),
}


class AnalysisError(SumetaError):
    pass


# ---------------------------------------------------------------------------
# Kendall's tau
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TauResult:
    tau: float
    p_value: float
    degenerate: bool
    n: int


def _count_inversions(seq) -> int:
    """Strict inversions (i < j with seq[i] > seq[j]) via bottom-up merge sort."""
    a = list(seq)
    n = len(a)
    buf = [0] * n
    inv = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            if mid >= hi:
                buf[lo:hi] = a[lo:hi]
                continue
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[i] <= a[j]:
                    buf[k] = a[i]
                    i += 1
                else:
                    inv += mid - i
                    buf[k] = a[j]
                    j += 1
                k += 1
            while i < mid:
                buf[k] = a[i]
                i += 1
                k += 1
            while j < hi:
                buf[k] = a[j]
                j += 1
                k += 1
        a, buf = buf, a
        width *= 2
    return inv


def _tie_group_sizes(sorted_values) -> list[int]:
    sizes = []
    run = 1
    for prev, cur in zip(sorted_values, sorted_values[1:]):
        if cur == prev:
            run += 1
        else:
            if run > 1:
                sizes.append(run)
            run = 1
    if run > 1:
        sizes.append(run)
    return sizes


def _exact_two_sided_p(discordant: int, n: int) -> float:
    """Exact null p-value from the distribution of inversion counts (no ties)."""
    tot = n * (n - 1) // 2
    counts = [1]
    for k in range(2, n + 1):
        m = len(counts) + k - 1
        new = [0] * m
        run = 0
        for i in range(m):
            if i < len(counts):
                run += counts[i]
            if i - k >= 0:
                run -= counts[i - k]
            new[i] = run
        counts = new
    c = min(discordant, tot - discordant)
    cum = sum(counts[: c + 1])
    return min(1.0, 2.0 * cum / math.factorial(n))


def _normal_two_sided_p(s: int, n: int, x_groups, y_groups) -> float:
    v0 = n * (n - 1) * (2 * n + 5)
    vt = sum(t * (t - 1) * (2 * t + 5) for t in x_groups)
    vu = sum(u * (u - 1) * (2 * u + 5) for u in y_groups)
    v1 = sum(t * (t - 1) for t in x_groups) * sum(u * (u - 1) for u in y_groups)
    v2 = sum(t * (t - 1) * (t - 2) for t in x_groups) * sum(
        u * (u - 1) * (u - 2) for u in y_groups
    )
    var = (v0 - vt - vu) / 18 + v1 / (2 * n * (n - 1))
    if n > 2:
        var += v2 / (9 * n * (n - 1) * (n - 2))
    if var <= 0:
        return 1.0
    z = s / math.sqrt(var)
    return math.erfc(abs(z) / math.sqrt(2))


def kendall_tau(x, y) -> TauResult:
    """Tie-corrected Kendall's tau-b with a two-sided p-value.

    Discordant pairs are counted exactly by merge sort; the p-value uses the
    exact null distribution for n < 10 without ties and the tie-corrected
    normal approximation otherwise. A sequence that is entirely tied on
    either side has no defined ranking, so the result is flagged degenerate
    (tau and p are NaN).
    """
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    n = len(x)
    if n != len(y):
        raise AnalysisError(f"length mismatch: {n} vs {len(y)}")
    if n < 2:
        raise AnalysisError("kendall_tau needs at least two observations")

    order = sorted(range(n), key=lambda i: (x[i], y[i]))
    xs = [x[i] for i in order]
    ys = [y[i] for i in order]

    x_groups = _tie_group_sizes(xs)
    y_groups = _tie_group_sizes(sorted(y))
    joint_groups = _tie_group_sizes([(xs[i], ys[i]) for i in range(n)])

    tot = n * (n - 1) // 2
    n1 = sum(t * (t - 1) // 2 for t in x_groups)
    n2 = sum(u * (u - 1) // 2 for u in y_groups)
    nxy = sum(g * (g - 1) // 2 for g in joint_groups)
    if n1 == tot or n2 == tot:
        return TauResult(math.nan, math.nan, degenerate=True, n=n)

    discordant = _count_inversions(ys)
    s = tot - n1 - n2 + nxy - 2 * discordant
    tau = s / math.sqrt((tot - n1) * (tot - n2))

    if n < 10 and n1 == 0 and n2 == 0:
        p = _exact_two_sided_p(discordant, n)
    else:
        p = _normal_two_sided_p(s, n, x_groups, y_groups)
    return TauResult(tau, p, degenerate=False, n=n)


# ---------------------------------------------------------------------------
# scoring-range bins (L / M / T)
# ---------------------------------------------------------------------------

@dataclass
class BinAssignment:
    doc_id: str
    labels: dict          # candidate_id -> "L" | "M" | "T"
    boundaries: tuple     # (b1, b2) splitting the mean-score range into thirds
    degenerate: bool      # zero-width scoring range (everything lands in T)


def bin_document(doc_scores) -> BinAssignment:
    if doc_scores.mean_normalized is None:
        raise AnalysisError(f"document {doc_scores.doc_id!r}: normalize the matrix first")
    if doc_scores.n_candidates < 3:
        raise AnalysisError(
            f"document {doc_scores.doc_id!r} has {doc_scores.n_candidates} candidates; "
            "need >= 3 to bin"
        )
    means = doc_scores.mean_normalized
    lo = float(means.min())
    hi = float(means.max())
    b1 = lo + (hi - lo) / 3.0
    b2 = lo + 2.0 * (hi - lo) / 3.0
    labels = {}
    for cand_id, v in zip(doc_scores.candidate_ids, means):
        # candidates exactly on a boundary go to the higher bin
        if v >= b2:
            labels[cand_id] = "T"
        elif v >= b1:
            labels[cand_id] = "M"
        else:
            labels[cand_id] = "L"
    return BinAssignment(doc_scores.doc_id, labels, (b1, b2), degenerate=(hi == lo))


def bin_summaries(matrix: ScoreMatrix) -> dict:
    """Per-document L/M/T assignment over the mean normalized score range."""
    return {doc_id: bin_document(d) for doc_id, d in matrix.docs.items()}


# ---------------------------------------------------------------------------
# correlation tables
# ---------------------------------------------------------------------------

@dataclass
class TableRow:
    metric_a: str
    metric_b: str
    bin_spec: str
    mean_tau: float   # NaN when no document survived the filters
    n_docs: int       # documents whose tau was significant and averaged
    n_dropped: int    # documents dropped: non-significant or degenerate tau
    n_skipped: int    # documents skipped: fewer than 2 candidates in the spec


@dataclass
class CorrelationTable:
    alpha: float
    bin_specs: list
    rows: dict = field(default_factory=dict)  # (a, b, spec) -> TableRow

    def get(self, metric_a: str, metric_b: str, bin_spec: str) -> TableRow:
        key = (metric_a, metric_b, bin_spec)
        if key in self.rows:
            return self.rows[key]
        return self.rows[(metric_b, metric_a, bin_spec)]

    def pairs(self) -> list:
        seen = []
        for a, b, _ in self.rows:
            if (a, b) not in seen:
                seen.append((a, b))
        return seen


def correlation_table(matrix: ScoreMatrix, bins: dict, mode: str = "cumulative",
                      alpha: float = 0.05) -> CorrelationTable:
    """Mean per-document Kendall's tau for every metric pair and bin spec.

    Per document and spec, tau is computed over the candidates whose bin
    label falls inside the spec; only documents with p < alpha contribute to
    the mean (the paper-style significance filter). Raw columns are used -
    normalization is monotone per document, so tau is identical either way.
    """
    if mode == "cumulative":
        specs = list(CUMULATIVE_SPECS)
    elif mode == "noncumulative":
        specs = list(NONCUMULATIVE_SPECS)
    else:
        raise AnalysisError(f"unknown mode {mode!r}")
    missing = [d for d in matrix.docs if d not in bins]
    if missing:
        raise AnalysisError(f"bins missing for {len(missing)} document(s), e.g. {missing[0]!r}")

    table = CorrelationTable(alpha=alpha, bin_specs=specs)
    metric_idx = {m: i for i, m in enumerate(matrix.metrics)}
    for a, b in combinations(matrix.metrics, 2):
        ia, ib = metric_idx[a], metric_idx[b]
        for spec in specs:
            allowed = _SPEC_LABELS[spec]
            taus = []
            dropped = skipped = 0
            for d in matrix.docs.values():
                labels = bins[d.doc_id].labels
                rows = [i for i, c in enumerate(d.candidate_ids) if labels[c] in allowed]
                if len(rows) < 2:
                    skipped += 1
                    continue
                res = kendall_tau(d.raw[rows, ia], d.raw[rows, ib])
                if res.degenerate or res.p_value >= alpha:
                    dropped += 1
                    continue
                taus.append(res.tau)
            mean = sum(taus) / len(taus) if taus else math.nan
            table.rows[(a, b, spec)] = TableRow(a, b, spec, mean, len(taus), dropped, skipped)
    return table


def document_tau(matrix: ScoreMatrix, metric_a: str, metric_b: str) -> dict:
    """Per-document tau over the full candidate pool for one metric pair."""
    ia = matrix.metric_index(metric_a)
    ib = matrix.metric_index(metric_b)
    out = {}
    for d in matrix.docs.values():
        if d.n_candidates < 2:
            continue
        out[d.doc_id] = kendall_tau(d.raw[:, ia], d.raw[:, ib])
    return out


# ---------------------------------------------------------------------------
# disagreement curves
# ---------------------------------------------------------------------------

@dataclass
class Curve:
    x: list          # thresholds (cumulative) or bin centers (non-cumulative)
    values: list     # NaN where a bin holds no usable pairs
    counts: list     # usable (non-tied) pairs per bin

    def __post_init__(self):
        if not (len(self.x) == len(self.values) == len(self.counts)):
            raise AnalysisError("curve fields must have equal length")


def _stack_matrix(matrix: ScoreMatrix):
    if not matrix.is_normalized:
        raise AnalysisError("normalize the matrix before running analyses")
    raw = np.vstack([d.raw for d in matrix.docs.values()])
    norm = np.vstack([d.normalized for d in matrix.docs.values()])
    return raw, norm


def disagreement(matrix: ScoreMatrix, anchor_metric: str, pairs: int = 100_000,
                 nbins: int = 15, mode: str = "cumulative", seed: int = 0,
                 from_top: bool = True) -> dict:
    """Fraction of sampled summary pairs the anchor metric and each other
    metric rank oppositely, binned by the pair's mean normalized anchor score.

    Pairs are drawn uniformly over every (document, candidate) entry in the
    matrix, so the two elements of a pair may come from different documents.
    Cumulative bins accumulate from the top of the key range (pairs with key
    >= threshold); ``from_top=False`` accumulates from the bottom instead.
    Pairs exactly tied on either metric are excluded from both numerator and
    denominator. Returns ``{other_metric: Curve}``.
    """
    if mode not in ("cumulative", "noncumulative"):
        raise AnalysisError(f"unknown mode {mode!r}")
    raw, norm = _stack_matrix(matrix)
    n_entries = raw.shape[0]
    if n_entries < 2:
        raise AnalysisError("need at least two scored candidates corpus-wide")
    anchor_idx = matrix.metric_index(anchor_metric)

    rng = make_rng(seed, "disagreement", anchor_metric)
    idx_a = np.fromiter((rand_index(rng, n_entries) for _ in range(pairs)), dtype=np.int64)
    idx_b = np.fromiter((rand_index(rng, n_entries) for _ in range(pairs)), dtype=np.int64)

    keys = 0.5 * (norm[idx_a, anchor_idx] + norm[idx_b, anchor_idx])
    kmin = float(keys.min())
    kmax = float(keys.max())
    span = kmax - kmin

    if mode == "cumulative":
        if from_top:
            xs = [kmin + i * span / nbins for i in range(nbins)]
            members = [keys >= t for t in xs]
        else:
            xs = [kmin + (i + 1) * span / nbins for i in range(nbins)]
            members = [keys <= t for t in xs]
    else:
        width = span / nbins
        xs = [kmin + (i + 0.5) * width for i in range(nbins)]
        if span > 0:
            bin_of = np.minimum(((keys - kmin) / width).astype(np.int64), nbins - 1)
        else:
            bin_of = np.zeros(pairs, dtype=np.int64)
        members = [bin_of == i for i in range(nbins)]

    d_anchor = raw[idx_a, anchor_idx] - raw[idx_b, anchor_idx]
    curves = {}
    for other in matrix.metrics:
        if other == anchor_metric:
            continue
        oi = matrix.metric_index(other)
        d_other = raw[idx_a, oi] - raw[idx_b, oi]
        usable = (d_anchor != 0) & (d_other != 0)
        opposite = usable & (((d_anchor > 0) & (d_other < 0)) | ((d_anchor < 0) & (d_other > 0)))
        values, counts = [], []
        for member in members:
            denom = int(np.count_nonzero(member & usable))
            counts.append(denom)
            if denom == 0:
                values.append(math.nan)
            else:
                values.append(int(np.count_nonzero(member & opposite)) / denom)
        curves[other] = Curve(xs, values, counts)
    return curves


# ---------------------------------------------------------------------------
# F/N and F'/N ratio curves
# ---------------------------------------------------------------------------

def _ratio_curve(matrix: ScoreMatrix, nbins: int, seed, max_anchors_per_doc,
                 better: bool) -> Curve:
    if matrix.n_metrics < 2:
        raise AnalysisError("F/N ratios need at least two metrics")
    if not matrix.is_normalized:
        raise AnalysisError("normalize the matrix before running analyses")

    bin_keys, ratios = [], []
    for d in matrix.docs.values():
        if d.n_candidates < 2:
            raise AnalysisError(
                f"document {d.doc_id!r} has fewer than two candidates"
            )
        anchors = range(d.n_candidates)
        if max_anchors_per_doc is not None and max_anchors_per_doc < d.n_candidates:
            rng = make_rng(seed or 0, "fn-anchors", d.doc_id)
            pool = list(range(d.n_candidates))
            chosen = []
            for _ in range(max_anchors_per_doc):
                chosen.append(pool.pop(rand_index(rng, len(pool))))
            anchors = sorted(chosen)
        if better:
            cmp = d.raw[:, None, :] > d.raw[None, :, :]   # cmp[x, s, m]
        else:
            cmp = d.raw[:, None, :] < d.raw[None, :, :]
        all_m = cmp.all(axis=2)
        any_m = cmp.any(axis=2)
        for s in anchors:
            n_any = int(any_m[:, s].sum())
            if n_any == 0:
                continue
            n_all = int(all_m[:, s].sum())
            bin_keys.append(float(d.mean_normalized[s]))
            ratios.append(n_all / n_any)

    xs = [(i + 0.5) / nbins for i in range(nbins)]
    sums = [0.0] * nbins
    counts = [0] * nbins
    for key, ratio in zip(bin_keys, ratios):
        b = min(int(key * nbins), nbins - 1)
        sums[b] += ratio
        counts[b] += 1
    values = [sums[i] / counts[i] if counts[i] else math.nan for i in range(nbins)]
    return Curve(xs, values, counts)


def fn_ratio(matrix: ScoreMatrix, nbins: int = 15, seed=None,
             max_anchors_per_doc=None) -> Curve:
    """Of the candidates some metric ranks above an anchor, the fraction all
    metrics rank above it; averaged within equal-width bins of the anchor's
    mean normalized score over [0,1]. Every candidate anchors once per
    document unless ``max_anchors_per_doc`` subsamples (seeded)."""
    return _ratio_curve(matrix, nbins, seed, max_anchors_per_doc, better=True)


def fprime_ratio(matrix: ScoreMatrix, nbins: int = 15, seed=None,
                 max_anchors_per_doc=None) -> Curve:
    """Mirror of :func:`fn_ratio` with both inequalities flipped (ranked worse)."""
    return _ratio_curve(matrix, nbins, seed, max_anchors_per_doc, better=False)


# ---------------------------------------------------------------------------
# random-metric baseline
# ---------------------------------------------------------------------------

def random_metric_baseline(n_docs: int, n_candidates: int, n_metrics: int,
                           seed: int = 0) -> ScoreMatrix:
    """Synthetic matrix of independent Uniform(0,1) scores; feeds every
    analysis unchanged (normalize it first, like a real matrix)."""
    if n_docs < 1 or n_candidates < 1 or n_metrics < 1:
        raise AnalysisError("baseline dimensions must all be >= 1")
    rng = make_rng(seed, "random-baseline")
    metrics = [f"RND{i + 1}" for i in range(n_metrics)]
    matrix = ScoreMatrix(metrics)
    doc_width = len(str(max(n_docs - 1, 1)))
    cand_width = len(str(max(n_candidates - 1, 1)))
    for di in range(n_docs):
        raw = np.array(
            [[rng.random() for _ in range(n_metrics)] for _ in range(n_candidates)],
            dtype=float,
        )
        cand_ids = [f"c{j:0{cand_width}d}" for j in range(n_candidates)]
        matrix.add_document(f"rnd{di:0{doc_width}d}", cand_ids, raw)
    return matrix
