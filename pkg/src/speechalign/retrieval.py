"""Inference-side retrieval: cosine ranking, candidate regimes, metrics.

A text query is ranked against speech embeddings by cosine similarity,
either over the full candidate pool or over five seeded random candidates
per query (gold always included). Reported metrics: HITS@1, MRR, meanR,
and Macro-F1 for the threshold classifier.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .seeds import rng_for

CANDIDATE_MODES = ("five", "full")
DEFAULT_CANDIDATES_K = 5
CLASSIFY_THRESHOLD = 0.5
NORM_TOLERANCE = 1e-6


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """a.b / (||a|| ||b||); zero vectors are an error."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    return float(a @ b / (na * nb))


@dataclass
class EmbeddingIndex:
    """Immutable id -> unit-vector store for exact brute-force search."""

    ids: list[str]
    matrix: np.ndarray

    def __post_init__(self) -> None:
        if len(self.ids) != len(set(self.ids)):
            raise ValueError("index ids must be unique")
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.ids):
            raise ValueError("matrix must have one row per id")
        norms = np.linalg.norm(self.matrix, axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
            raise ValueError("index rows must be unit-norm")
        self._row = {rec_id: i for i, rec_id in enumerate(self.ids)}

    @classmethod
    def build(cls, ids: Sequence[str], vectors: np.ndarray) -> "EmbeddingIndex":
        """Normalize raw vectors into an index; zero rows are an error."""
        vectors = np.asarray(vectors, dtype=np.float64)
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ValueError("cannot index a zero vector")
        return cls(ids=list(ids), matrix=vectors / norms)

    def row(self, rec_id: str) -> int:
        if rec_id not in self._row:
            raise KeyError(f"unknown id {rec_id!r}")
        return self._row[rec_id]


def rank(index: EmbeddingIndex, query: np.ndarray, candidate_ids: Sequence[str]) -> list[tuple[str, float]]:
    """Candidates ordered by descending cosine score, ties by ascending id."""
    query = np.asarray(query, dtype=np.float64)
    norm = np.linalg.norm(query)
    if norm == 0.0:
        raise ValueError("cannot rank against a zero query vector")
    unit_query = query / norm
    rows = [index.row(cid) for cid in candidate_ids]
    scores = index.matrix[rows] @ unit_query
    order = sorted(zip(candidate_ids, scores), key=lambda pair: (-pair[1], pair[0]))
    return [(cid, float(score)) for cid, score in order]


def sample_candidates(all_ids: Sequence[str], gold_id: str, k: int = DEFAULT_CANDIDATES_K, seed: int = 0) -> list[str]:
    """Gold plus k-1 seeded random non-gold ids, drawn without replacement.

    The query (gold) id is mixed into the seed, so each query gets its own
    reproducible candidate pool.
    """
    ids = sorted(all_ids)
    if gold_id not in set(ids):
        raise ValueError(f"gold id {gold_id!r} not among candidates")
    if k > len(ids):
        raise ValueError(f"cannot sample {k} candidates from {len(ids)} ids")
    others = [i for i in ids if i != gold_id]
    rng = rng_for(seed, "candidates", gold_id)
    chosen = rng.choice(len(others), size=k - 1, replace=False) if k > 1 else []
    return [gold_id] + [others[j] for j in sorted(chosen)]


def metrics(ranks: Sequence[int]) -> tuple[float, float, float]:
    """(hits@1, MRR, meanR) over a list of gold ranks (1-based)."""
    if len(ranks) == 0:
        raise ValueError("metrics need at least one rank")
    arr = np.asarray(ranks, dtype=np.float64)
    if np.any(arr < 1):
        raise ValueError("ranks must be >= 1")
    hits_at_1 = float(np.mean(arr == 1.0))
    mrr = float(np.mean(1.0 / arr))
    mean_r = float(np.mean(arr))
    return hits_at_1, mrr, mean_r


def classify_and_f1(
    pairs: Iterable[tuple[np.ndarray, np.ndarray, bool]],
    threshold: float = CLASSIFY_THRESHOLD,
) -> float:
    """Macro-F1 of the relevance classifier: predict relevant iff cosine >= threshold.

    Per-class F1 is zero when that class's precision + recall is zero; the
    macro average weights both classes equally.
    """
    labels, preds = [], []
    for query_vec, speech_vec, relevant in pairs:
        labels.append(bool(relevant))
        preds.append(cosine(query_vec, speech_vec) >= threshold)
    if not labels:
        raise ValueError("need at least one pair")
    if all(labels) or not any(labels):
        raise ValueError("need at least one pair of each class")
    f1s = []
    for positive in (True, False):
        tp = sum(1 for y, p in zip(labels, preds) if y == positive and p == positive)
        fp = sum(1 for y, p in zip(labels, preds) if y != positive and p == positive)
        fn = sum(1 for y, p in zip(labels, preds) if y == positive and p != positive)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    return float(np.mean(f1s))


@dataclass
class RetrievalReport:
    hits_at_1: float
    mrr: float
    mean_r: float
    macro_f1: float
    n_queries: int
    candidate_mode: str

    def __post_init__(self) -> None:
        if self.candidate_mode not in CANDIDATE_MODES:
            raise ValueError(f"unknown candidate mode {self.candidate_mode!r}")
        if self.mrr < self.hits_at_1:
            raise ValueError("mrr must be >= hits@1")
        if self.mean_r < 1.0:
            raise ValueError("meanR must be >= 1")

    def as_dict(self) -> dict:
        return {
            "hits_at_1": self.hits_at_1,
            "mrr": self.mrr,
            "mean_r": self.mean_r,
            "macro_f1": self.macro_f1,
            "n_queries": self.n_queries,
            "candidate_mode": self.candidate_mode,
        }


def evaluate(
    speech_index: EmbeddingIndex,
    text_vectors: dict[str, np.ndarray],
    query_ids: Sequence[str],
    candidate_mode: str = "full",
    k: int = DEFAULT_CANDIDATES_K,
    seed: int = 0,
) -> RetrievalReport:
    """Run one retrieval evaluation: each query's gold speech shares its id.

    Macro-F1 uses a balanced pair set: per query, the gold speech as the
    relevant pair and one seeded non-gold speech as the irrelevant pair.
    """
    if candidate_mode not in CANDIDATE_MODES:
        raise ValueError(f"unknown candidate mode {candidate_mode!r}")
    if len(query_ids) == 0:
        raise ValueError("no queries to evaluate")
    all_ids = list(speech_index.ids)
    k = min(k, len(all_ids))  # tiny pools degenerate to the full regime
    gold_ranks = []
    pairs = []
    for qid in query_ids:
        if qid not in text_vectors:
            raise ValueError(f"query {qid!r} has no text embedding")
        query = text_vectors[qid]
        if candidate_mode == "five":
            candidates = sample_candidates(all_ids, qid, k=k, seed=seed)
        else:
            candidates = all_ids
        ordered = rank(speech_index, query, candidates)
        gold_ranks.append(1 + next(i for i, (cid, _) in enumerate(ordered) if cid == qid))
        pairs.append((query, speech_index.matrix[speech_index.row(qid)], True))
        negatives = [i for i in sorted(all_ids) if i != qid]
        neg_id = negatives[int(rng_for(seed, "negative-pair", qid).integers(len(negatives)))]
        pairs.append((query, speech_index.matrix[speech_index.row(neg_id)], False))
    hits_at_1, mrr, mean_r = metrics(gold_ranks)
    return RetrievalReport(
        hits_at_1=hits_at_1,
        mrr=mrr,
        mean_r=mean_r,
        macro_f1=classify_and_f1(pairs),
        n_queries=len(query_ids),
        candidate_mode=candidate_mode,
    )
