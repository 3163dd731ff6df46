"""Ranking, candidate sampling, metric, and Macro-F1 tests with brute-force oracles."""

import numpy as np
import pytest

from speechalign.retrieval import (
    EmbeddingIndex,
    classify_and_f1,
    cosine,
    evaluate,
    metrics,
    rank,
    sample_candidates,
)


def random_index(rng, n, d=8, prefix="it"):
    ids = [f"{prefix}{i:04d}" for i in range(n)]
    return EmbeddingIndex.build(ids, rng.normal(size=(n, d)))


class TestCosine:
    def test_identical(self):
        v = np.array([0.2, -0.4, 1.0])
        assert cosine(v, v) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 2.0]) == pytest.approx(0.0)

    def test_forty_five_degrees(self):
        assert cosine([1.0, 0.0], [1.0, 1.0]) == pytest.approx(1 / np.sqrt(2), abs=1e-5)

    def test_scaling_invariance(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=5), rng.normal(size=5)
        assert cosine(3.0 * a, 0.25 * b) == pytest.approx(cosine(a, b), rel=1e-12)

    def test_zero_vector_is_error(self):
        with pytest.raises(ValueError):
            cosine(np.zeros(3), np.ones(3))


class TestEmbeddingIndex:
    def test_rows_are_normalized(self):
        idx = random_index(np.random.default_rng(1), 10)
        np.testing.assert_allclose(np.linalg.norm(idx.matrix, axis=1), 1.0, atol=1e-12)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            EmbeddingIndex.build(["a", "a"], np.ones((2, 3)))

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            EmbeddingIndex.build(["a", "b"], np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_unknown_id(self):
        idx = random_index(np.random.default_rng(2), 4)
        with pytest.raises(KeyError):
            idx.row("missing")


class TestRank:
    def test_single_candidate(self):
        idx = random_index(np.random.default_rng(3), 5)
        out = rank(idx, np.ones(8), ["it0002"])
        assert [cid for cid, _ in out] == ["it0002"]

    def test_orders_by_score(self):
        idx = EmbeddingIndex.build(["A", "B"], np.array([[1.0, 0.0], [0.0, 1.0]]))
        out = rank(idx, np.array([0.9, 0.1]), ["A", "B"])
        assert [cid for cid, _ in out] == ["A", "B"]

    def test_tie_breaks_by_ascending_id(self):
        idx = EmbeddingIndex.build(["B", "A"], np.array([[1.0, 0.0], [1.0, 0.0]]))
        out = rank(idx, np.array([1.0, 0.0]), ["B", "A"])
        assert [cid for cid, _ in out] == ["A", "B"]

    def test_unknown_candidate_is_error(self):
        idx = random_index(np.random.default_rng(4), 3)
        with pytest.raises(KeyError):
            rank(idx, np.ones(8), ["it0000", "nope"])

    def test_agrees_with_brute_force_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = int(rng.integers(2, 50))
            idx = random_index(rng, n)
            query = rng.normal(size=8)
            ordered = rank(idx, query, idx.ids)
            # Oracle: cosine per candidate, python sort on (-score, id).
            unit_q = query / np.linalg.norm(query)
            scored = [(cid, float(idx.matrix[idx.row(cid)] @ unit_q)) for cid in idx.ids]
            oracle = sorted(scored, key=lambda pair: (-pair[1], pair[0]))
            assert [cid for cid, _ in ordered] == [cid for cid, _ in oracle]

    def test_scaling_leaves_ranking_unchanged(self):
        rng = np.random.default_rng(6)
        idx = random_index(rng, 20)
        query = rng.normal(size=8)
        base = [cid for cid, _ in rank(idx, query, idx.ids)]
        scaled = [cid for cid, _ in rank(idx, 7.5 * query, idx.ids)]
        assert base == scaled


class TestSampleCandidates:
    def test_pool_equals_k_returns_everything(self):
        ids = [f"x{i}" for i in range(5)]
        out = sample_candidates(ids, "x3", k=5, seed=1)
        assert sorted(out) == sorted(ids)

    def test_gold_always_present_and_sizes(self):
        ids = [f"x{i:02d}" for i in range(30)]
        for gold in ids:
            out = sample_candidates(ids, gold, k=5, seed=9)
            assert gold in out
            assert len(out) == 5
            assert len(set(out)) == 5

    def test_deterministic(self):
        ids = [f"x{i:02d}" for i in range(30)]
        assert sample_candidates(ids, "x07", 5, 42) == sample_candidates(ids, "x07", 5, 42)

    def test_per_query_pools_differ(self):
        ids = [f"x{i:02d}" for i in range(30)]
        a = set(sample_candidates(ids, "x00", 5, 7)) - {"x00"}
        b = set(sample_candidates(ids, "x01", 5, 7)) - {"x01"}
        assert a != b

    def test_too_small_pool_is_error(self):
        with pytest.raises(ValueError):
            sample_candidates(["a", "b"], "a", k=5, seed=0)


class TestMetrics:
    def test_all_first(self):
        assert metrics([1, 1, 1]) == pytest.approx((1.0, 1.0, 1.0))

    def test_hand_computed_case(self):
        hits, mrr, mean_r = metrics([1, 2, 4])
        assert hits == pytest.approx(1 / 3, abs=1e-6)
        assert mrr == pytest.approx(0.58333, abs=1e-5)
        assert mean_r == pytest.approx(2.3333, abs=1e-4)

    def test_empty_is_error(self):
        with pytest.raises(ValueError):
            metrics([])

    def test_mrr_dominates_hits_property(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            ranks = rng.integers(1, 20, size=int(rng.integers(1, 30)))
            hits, mrr, mean_r = metrics(ranks)
            assert mrr >= hits
            assert mean_r >= 1.0
            assert (mean_r == 1.0) == (hits == 1.0)

    def test_agrees_with_loop_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            ranks = [int(r) for r in rng.integers(1, 50, size=int(rng.integers(1, 40)))]
            hits, mrr, mean_r = metrics(ranks)
            assert hits == pytest.approx(sum(1 for r in ranks if r == 1) / len(ranks))
            assert mrr == pytest.approx(sum(1.0 / r for r in ranks) / len(ranks))
            assert mean_r == pytest.approx(sum(ranks) / len(ranks))


class TestClassifyAndF1:
    def test_all_correct(self):
        e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        pairs = [(e1, e1, True), (e2, e2, True), (e1, e2, False), (e2, e1, False)]
        assert classify_and_f1(pairs) == pytest.approx(1.0)

    def test_all_predicted_relevant_half_are(self):
        e1 = np.array([1.0, 0.0])
        pairs = [(e1, e1, True), (e1, e1, True), (e1, e1, False), (e1, e1, False)]
        assert classify_and_f1(pairs) == pytest.approx((2 / 3 + 0.0) / 2, abs=1e-6)

    def test_inverted_predictions_give_zero(self):
        e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        pairs = [(e1, e2, True), (e2, e1, True), (e1, e1, False), (e2, e2, False)]
        assert classify_and_f1(pairs) == pytest.approx(0.0)

    def test_single_class_is_error(self):
        e1 = np.array([1.0, 0.0])
        with pytest.raises(ValueError):
            classify_and_f1([(e1, e1, True), (e1, e1, True)])

    def test_threshold_boundary_counts_as_relevant(self):
        q = np.array([1.0, 0.0])
        # cosine exactly 0.5 at 60 degrees
        v = np.array([0.5, np.sqrt(3) / 2])
        pairs = [(q, v, True), (q, -q, False)]
        assert classify_and_f1(pairs) == pytest.approx(1.0)


class TestEvaluate:
    def test_perfect_embeddings_saturate_metrics(self):
        rng = np.random.default_rng(9)
        n, d = 12, 16
        vectors = rng.normal(size=(n, d))
        ids = [f"q{i:02d}" for i in range(n)]
        index = EmbeddingIndex.build(ids, vectors)
        text = {i: v for i, v in zip(ids, vectors)}
        report = evaluate(index, text, ids, candidate_mode="full")
        assert report.hits_at_1 == 1.0
        assert report.mrr == 1.0
        assert report.mean_r == 1.0
        assert report.n_queries == n

    def test_five_random_beats_full_on_random_vectors(self):
        rng = np.random.default_rng(10)
        n, d = 60, 12
        ids = [f"r{i:03d}" for i in range(n)]
        speech = rng.normal(size=(n, d))
        index = EmbeddingIndex.build(ids, speech)
        text = {i: rng.normal(size=d) for i in ids}  # unrelated to speech
        five = evaluate(index, text, ids, candidate_mode="five", seed=3)
        full = evaluate(index, text, ids, candidate_mode="full", seed=3)
        assert five.mrr > full.mrr
        assert five.mean_r < full.mean_r

    def test_deterministic(self):
        rng = np.random.default_rng(11)
        ids = [f"d{i}" for i in range(10)]
        index = EmbeddingIndex.build(ids, rng.normal(size=(10, 6)))
        text = {i: rng.normal(size=6) for i in ids}
        a = evaluate(index, text, ids, candidate_mode="five", seed=5)
        b = evaluate(index, text, ids, candidate_mode="five", seed=5)
        assert a == b
