from __future__ import annotations

import math
import random

import numpy as np
import pytest
import scipy.stats

from sumeta.analysis import (
    AnalysisError,
    bin_document,
    bin_summaries,
    correlation_table,
    disagreement,
    document_tau,
    fn_ratio,
    fprime_ratio,
    kendall_tau,
    random_metric_baseline,
)
from sumeta.metrics import ScoreMatrix, normalize

from oracles import brute_kendall_tau


def random_vectors(rng, n, tie_prone=True):
    if tie_prone and rng.random() < 0.5:
        # draws from a small grid force plenty of exact ties
        return [rng.randint(0, 5) / 5 for _ in range(n)]
    return [rng.random() for _ in range(n)]


def build_matrix(blocks, metrics=("m1", "m2")):
    matrix = ScoreMatrix(list(metrics))
    for doc_id, block in blocks.items():
        block = np.asarray(block, dtype=float)
        matrix.add_document(doc_id, [f"c{i}" for i in range(len(block))], block)
    return matrix


class TestKendallTau:
    def test_identity(self):
        res = kendall_tau([1, 2, 3], [1, 2, 3])
        assert res.tau == 1.0 and not res.degenerate

    def test_reversal(self):
        res = kendall_tau([1, 2, 3], [3, 2, 1])
        assert res.tau == -1.0

    def test_degenerate_all_ties(self):
        res = kendall_tau([1.0, 1.0, 1.0], [1, 2, 3])
        assert res.degenerate and math.isnan(res.tau) and math.isnan(res.p_value)
        assert kendall_tau([1, 2], [5.0, 5.0]).degenerate

    def test_length_contract(self):
        with pytest.raises(AnalysisError):
            kendall_tau([1], [1])
        with pytest.raises(AnalysisError):
            kendall_tau([1, 2], [1, 2, 3])

    def test_matches_brute_force_exactly(self):
        rng = random.Random(1234)
        for _ in range(300):
            n = rng.randint(2, 40)
            x = random_vectors(rng, n)
            y = random_vectors(rng, n)
            expected = brute_kendall_tau(x, y)
            got = kendall_tau(x, y)
            if expected is None:
                assert got.degenerate
            else:
                assert got.tau == expected

    def test_matches_scipy(self):
        rng = random.Random(99)
        for _ in range(200):
            n = rng.randint(3, 30)
            x = random_vectors(rng, n)
            y = random_vectors(rng, n)
            if brute_kendall_tau(x, y) is None:
                continue
            ours = kendall_tau(x, y)
            ref = scipy.stats.kendalltau(x, y)
            assert ours.tau == pytest.approx(ref.statistic, abs=1e-12)
            has_ties = len(set(x)) < n or len(set(y)) < n
            if n < 10 and not has_ties:
                ref_p = scipy.stats.kendalltau(x, y, method="exact").pvalue
            else:
                ref_p = scipy.stats.kendalltau(x, y, method="asymptotic").pvalue
            assert ours.p_value == pytest.approx(ref_p, rel=1e-9, abs=1e-12)

    def test_exact_small_n_p_value_matches_scipy_exact(self):
        rng = random.Random(7)
        for _ in range(100):
            n = rng.randint(2, 9)
            x = rng.sample(range(100), n)
            y = rng.sample(range(100), n)
            ours = kendall_tau(x, y)
            ref = scipy.stats.kendalltau(x, y, method="exact")
            assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-12)


class TestBins:
    def test_thirds_of_unit_range(self):
        matrix = build_matrix({"d": [[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]]})
        normalize(matrix)
        bins = bin_document(matrix.docs["d"])
        assert bins.labels == {"c0": "L", "c1": "M", "c2": "T"}
        assert not bins.degenerate

    def test_boundary_value_goes_up(self):
        matrix = build_matrix({"d": [[0.0], [0.34], [1.0]]}, metrics=("m1",))
        normalize(matrix)
        bins = bin_document(matrix.docs["d"])
        assert bins.labels["c1"] == "M"  # 0.34 >= 1/3 boundary
        matrix2 = build_matrix({"d": [[0.0], [1.0 / 3.0], [1.0]]}, metrics=("m1",))
        normalize(matrix2)
        assert bin_document(matrix2.docs["d"]).labels["c1"] == "M"

    def test_degenerate_range_lands_in_top(self):
        matrix = build_matrix({"d": [[0.4, 0.2], [0.4, 0.2], [0.4, 0.2]]})
        normalize(matrix)
        bins = bin_document(matrix.docs["d"])
        assert bins.degenerate
        assert set(bins.labels.values()) == {"T"}

    def test_too_few_candidates(self):
        matrix = build_matrix({"d": [[0.1, 0.4], [0.9, 0.8]]})
        normalize(matrix)
        with pytest.raises(AnalysisError, match="'d'"):
            bin_document(matrix.docs["d"])


def monotone_pair_matrix(n_docs=6, n_cands=30, seed=5):
    """Two metrics that are strictly monotone transforms of each other."""
    rng = random.Random(seed)
    blocks = {}
    for d in range(n_docs):
        base = [rng.random() for _ in range(n_cands)]
        blocks[f"doc{d}"] = [[v, v * v * 0.5 + 0.1] for v in base]
    return build_matrix(blocks)


class TestCorrelationTable:
    def test_monotone_transforms_give_tau_one_everywhere(self):
        matrix = monotone_pair_matrix()
        normalize(matrix)
        bins = bin_summaries(matrix)
        for mode in ("cumulative", "noncumulative"):
            table = correlation_table(matrix, bins, mode=mode)
            for row in table.rows.values():
                assert row.mean_tau == pytest.approx(1.0)
                assert row.n_docs > 0

    def test_symmetric_lookup(self):
        matrix = monotone_pair_matrix()
        normalize(matrix)
        bins = bin_summaries(matrix)
        table = correlation_table(matrix, bins, mode="cumulative")
        assert table.get("m1", "m2", "T") is table.get("m2", "m1", "T")

    def test_nonsignificant_documents_dropped(self):
        # independent random metrics: most per-doc taus fail p < 0.05
        rng = random.Random(21)
        blocks = {
            f"doc{d}": [[rng.random(), rng.random()] for _ in range(12)] for d in range(8)
        }
        matrix = build_matrix(blocks)
        normalize(matrix)
        bins = bin_summaries(matrix)
        table = correlation_table(matrix, bins, mode="cumulative", alpha=0.05)
        row = table.get("m1", "m2", "L+M+T")
        assert row.n_docs + row.n_dropped + row.n_skipped == 8
        assert row.n_dropped > 0

    def test_duplicate_metric_column_self_correlates(self):
        rng = random.Random(3)
        blocks = {}
        for d in range(5):
            vals = [rng.random() for _ in range(24)]
            blocks[f"doc{d}"] = [[v, v] for v in vals]
        matrix = build_matrix(blocks)
        normalize(matrix)
        table = correlation_table(matrix, bin_summaries(matrix), mode="cumulative")
        for spec in ("L+M+T", "M+T", "T"):
            assert table.get("m1", "m2", spec).mean_tau == pytest.approx(1.0)


class TestDisagreement:
    def test_scaled_metric_never_disagrees(self):
        rng = random.Random(8)
        blocks = {
            f"doc{d}": [[v, 2.0 * v] for v in (rng.random() for _ in range(20))]
            for d in range(5)
        }
        matrix = build_matrix(blocks)
        normalize(matrix)
        for mode in ("cumulative", "noncumulative"):
            curves = disagreement(matrix, "m1", pairs=20000, nbins=15, mode=mode, seed=3)
            curve = curves["m2"]
            assert len(curve.x) == len(curve.values) == len(curve.counts) == 15
            for v, c in zip(curve.values, curve.counts):
                if c:
                    assert v == 0.0

    def test_anti_monotone_metric_always_disagrees(self):
        rng = random.Random(9)
        blocks = {
            f"doc{d}": [[v, -v] for v in (rng.random() for _ in range(20))]
            for d in range(5)
        }
        matrix = build_matrix(blocks)
        normalize(matrix)
        curve = disagreement(matrix, "m1", pairs=20000, mode="cumulative", seed=3)["m2"]
        for v, c in zip(curve.values, curve.counts):
            if c:
                assert v == 1.0

    def test_independent_uniform_metrics_near_half(self):
        matrix = random_metric_baseline(20, 50, 2, seed=42)
        normalize(matrix)
        curve = disagreement(matrix, "RND1", pairs=100_000, mode="cumulative", seed=11)["RND2"]
        overall = curve.values[0]  # first cumulative bin holds every usable pair
        # self-pairs (same entry drawn twice) tie on both metrics and drop out
        assert curve.counts[0] > 99_000
        assert abs(overall - 0.5) < 0.02

    def test_deterministic_under_seed(self):
        matrix = random_metric_baseline(5, 20, 2, seed=1)
        normalize(matrix)
        a = disagreement(matrix, "RND1", pairs=5000, seed=7)["RND2"]
        b = disagreement(matrix, "RND1", pairs=5000, seed=7)["RND2"]
        assert a == b

    def test_requires_candidates(self):
        matrix = build_matrix({"d": [[0.1, 0.2]]})
        normalize_error = None
        try:
            normalize(matrix)
        except Exception as exc:  # single candidate cannot normalize
            normalize_error = exc
        assert normalize_error is not None


class TestRatioCurves:
    def test_hand_enumerated_case(self):
        # three candidates, two metrics m1 = (0.1, 0.5, 0.9), m2 = (0.1, 0.9, 0.5).
        # anchor c0: c1 and c2 each beat it on every metric -> F = N = 2, ratio 1.
        # anchor c1: only c2 beats it anywhere (m1), but not on m2 -> 0/1.
        # anchor c2: only c1 beats it anywhere (m2), but not on m1 -> 0/1.
        matrix = build_matrix({"d": [[0.1, 0.1], [0.5, 0.9], [0.9, 0.5]]})
        normalize(matrix)
        curve = fn_ratio(matrix, nbins=1)
        assert curve.counts[0] == 3
        assert curve.values[0] == pytest.approx((1.0 + 0.0 + 0.0) / 3)

    def test_swapped_pair_gives_zero_ratio(self):
        # anchor strictly below one candidate on one metric only: N = 1, F = 0
        matrix = build_matrix({"d": [[0.5, 0.9], [0.9, 0.5]]})
        normalize(matrix)
        curve = fn_ratio(matrix, nbins=1)
        assert curve.counts[0] == 2
        assert curve.values[0] == 0.0

    def test_worst_anchor_with_unanimous_betters(self):
        matrix = build_matrix({"d": [[0.1, 0.1], [0.5, 0.5], [0.9, 0.9]]})
        normalize(matrix)
        curve = fn_ratio(matrix, nbins=1)
        # every anchor with N > 0 has F = N (the metrics agree perfectly)
        assert curve.values[0] == 1.0

    def test_fprime_mirrors_fn(self):
        rng = random.Random(13)
        blocks = {
            f"doc{d}": [[rng.random(), rng.random()] for _ in range(10)] for d in range(4)
        }
        matrix = build_matrix(blocks)
        normalize(matrix)
        flipped = ScoreMatrix(matrix.metrics)
        for doc_id, d in matrix.docs.items():
            flipped.add_document(doc_id, d.candidate_ids, -d.raw)
        normalize(flipped)
        up = fn_ratio(matrix, nbins=5)
        down = fprime_ratio(flipped, nbins=5)
        # negating all scores swaps "better" and "worse" and mirrors the key
        assert up.counts == down.counts[::-1]
        got = [v for v in down.values[::-1]]
        want = [v for v in up.values]
        for g, w in zip(got, want):
            assert (math.isnan(g) and math.isnan(w)) or g == pytest.approx(w)

    def test_single_metric_rejected(self):
        matrix = build_matrix({"d": [[0.1], [0.2]]}, metrics=("m1",))
        normalize(matrix)
        with pytest.raises(AnalysisError, match="two metrics"):
            fn_ratio(matrix)

    def test_anchor_subsampling_deterministic(self):
        matrix = random_metric_baseline(4, 30, 3, seed=2)
        normalize(matrix)
        a = fn_ratio(matrix, nbins=5, seed=9, max_anchors_per_doc=10)
        b = fn_ratio(matrix, nbins=5, seed=9, max_anchors_per_doc=10)
        assert a == b
        assert sum(a.counts) <= 40


class TestRandomBaseline:
    def test_seeded_calls_identical(self):
        a = random_metric_baseline(3, 4, 2, seed=5)
        b = random_metric_baseline(3, 4, 2, seed=5)
        assert a.doc_ids() == b.doc_ids()
        for doc_id in a.doc_ids():
            assert np.array_equal(a.docs[doc_id].raw, b.docs[doc_id].raw)

    def test_marginal_mean_near_half(self):
        matrix = random_metric_baseline(100, 200, 5, seed=3)
        values = np.concatenate([d.raw.ravel() for d in matrix.docs.values()])
        assert values.size == 100_000
        assert abs(values.mean() - 0.5) < 0.01

    def test_columns_uncorrelated(self):
        matrix = random_metric_baseline(1, 1000, 2, seed=17)
        d = matrix.docs[matrix.doc_ids()[0]]
        res = kendall_tau(d.raw[:, 0], d.raw[:, 1])
        assert abs(res.tau) < 0.1

    def test_dimension_contract(self):
        with pytest.raises(AnalysisError):
            random_metric_baseline(0, 5, 2)


def test_document_tau_spans_full_pool():
    matrix = monotone_pair_matrix(n_docs=3)
    normalize(matrix)
    taus = document_tau(matrix, "m1", "m2")
    assert set(taus) == set(matrix.doc_ids())
    assert all(r.tau == pytest.approx(1.0) for r in taus.values())
