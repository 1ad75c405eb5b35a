"""Hybrid retrieval: BM25 plus dense cosine, fused by reciprocal rank,
then re-ranked against lexical overlap.

Index snapshots are immutable; adding a document builds a new snapshot and
bumps the version, so readers never see a half-updated index and an
incrementally grown index is indistinguishable from a batch build.
"""
from __future__ import annotations

import json
import math
import threading
from bisect import insort
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import RetrievalError
from .providers import EmbeddingProvider, MockEmbeddingProvider
from .tokenization import tokenize

K1 = 1.2
B = 0.75
RRF_C = 60
RERANK_WEIGHT = 0.3
SNAPSHOT_SCHEMA = 1


# ---------------------------------------------------------------------------
# Sparse side
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InvertedIndex:
    """Term -> [(doc_id, tf)] postings, sorted by doc id within each term."""

    postings: Mapping[str, Sequence[tuple[str, int]]]
    doc_lengths: Mapping[str, int]
    k1: float = K1
    b: float = B

    @property
    def doc_count(self) -> int:
        return len(self.doc_lengths)

    @property
    def total_tokens(self) -> int:
        return sum(self.doc_lengths.values())

    @property
    def avg_doc_length(self) -> float:
        n = self.doc_count
        return self.total_tokens / n if n else 0.0

    def idf(self, term: str) -> float:
        n = len(self.postings.get(term, ()))
        big_n = self.doc_count
        return math.log((big_n - n + 0.5) / (n + 0.5) + 1.0)


def bm25_score(query_tokens: Sequence[str], doc_id: str, index: InvertedIndex) -> float:
    """Score one document against the query, one term occurrence at a time.

    Repeated query tokens contribute once per occurrence.
    """
    if doc_id not in index.doc_lengths:
        raise RetrievalError(f"unknown document {doc_id!r}")
    avgdl = index.avg_doc_length
    dl = index.doc_lengths[doc_id]
    score = 0.0
    for term in query_tokens:
        tf = 0
        for did, f in index.postings.get(term, ()):
            if did == doc_id:
                tf = f
                break
        if tf == 0:
            continue
        norm = tf + index.k1 * (1.0 - index.b + index.b * dl / avgdl)
        score += index.idf(term) * (tf * (index.k1 + 1.0) / norm)
    return score


# ---------------------------------------------------------------------------
# Hits and snapshots
# ---------------------------------------------------------------------------

@dataclass
class RetrievalHit:
    record_id: str
    sparse_score: float = 0.0
    dense_score: float = 0.0
    fused_score: float = 0.0
    final_score: float = 0.0
    rank: int = 0
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "sparse_score": self.sparse_score,
            "dense_score": self.dense_score,
            "fused_score": self.fused_score,
            "final_score": self.final_score,
            "rank": self.rank,
            "note": self.note,
        }


class IndexSnapshot:
    """One immutable generation of the index: postings, vectors, and the
    precomputed score arrays derived from them."""

    def __init__(self, version: int, provider: EmbeddingProvider,
                 doc_ids: list[str], texts: dict[str, str],
                 groups: dict[str, str], tokens: dict[str, tuple[str, ...]],
                 postings: dict[str, list[tuple[str, int]]],
                 vectors: dict[str, np.ndarray],
                 k1: float = K1, b: float = B):
        self.version = version
        self.provider = provider
        self.doc_ids = doc_ids
        self.row_of = {d: i for i, d in enumerate(doc_ids)}
        self.texts = texts
        self.groups = groups
        self.tokens = tokens
        self.token_sets = {d: frozenset(t) for d, t in tokens.items()}
        self.postings = postings
        self.vectors = vectors
        doc_lengths = {d: len(tokens[d]) for d in doc_ids}
        self.sparse = InvertedIndex(postings=postings, doc_lengths=doc_lengths,
                                    k1=k1, b=b)
        self._build_arrays()

    def _build_arrays(self) -> None:
        n = len(self.doc_ids)
        self._doc_len = np.array(
            [self.sparse.doc_lengths[d] for d in self.doc_ids], dtype=np.float64)
        avgdl = self.sparse.avg_doc_length
        k1, b = self.sparse.k1, self.sparse.b
        self._term_rows: dict[str, np.ndarray] = {}
        self._term_weights: dict[str, np.ndarray] = {}
        self._term_idf: dict[str, float] = {}
        for term, plist in self.postings.items():
            rows = np.array([self.row_of[d] for d, _ in plist], dtype=np.intp)
            tf = np.array([f for _, f in plist], dtype=np.float64)
            norm = tf + k1 * (1.0 - b + b * self._doc_len[rows] / avgdl)
            self._term_rows[term] = rows
            self._term_weights[term] = tf * (k1 + 1.0) / norm
            self._term_idf[term] = self.sparse.idf(term)
        if n:
            self._matrix = np.stack([self.vectors[d] for d in self.doc_ids])
        else:
            self._matrix = np.zeros((0, self.provider.dimension), dtype=np.float64)

    # -- queries ------------------------------------------------------------

    def sparse_scores(self, query_tokens: Sequence[str]) -> np.ndarray:
        scores = np.zeros(len(self.doc_ids), dtype=np.float64)
        for term in query_tokens:
            rows = self._term_rows.get(term)
            if rows is None:
                continue
            scores[rows] += self._term_idf[term] * self._term_weights[term]
        return scores

    def dense_scores(self, query_vector: np.ndarray) -> np.ndarray:
        if not len(self.doc_ids):
            return np.zeros(0, dtype=np.float64)
        return self._matrix @ query_vector

    def top_k(self, scores: np.ndarray, k: int) -> list[tuple[str, float]]:
        """Positive-scoring docs, best first; ties broken by ascending id."""
        nz = np.flatnonzero(scores > 0.0)
        if nz.size == 0 or k <= 0:
            return []
        cand = nz
        if nz.size > k:
            vals = scores[nz]
            kth = np.partition(vals, nz.size - k)[nz.size - k]
            cand = nz[vals >= kth]
        pairs = [(self.doc_ids[r], float(scores[r])) for r in cand]
        pairs.sort(key=lambda p: (-p[1], p[0]))
        return pairs[:k]


def jaccard_overlap(query_tokens: Iterable[str], doc_tokens: Iterable[str]) -> float:
    a, b = set(query_tokens), set(doc_tokens)
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def hits_from_scored(pairs: Sequence[tuple[str, float]], channel: str) -> list[RetrievalHit]:
    hits = []
    for rank, (doc_id, score) in enumerate(pairs, start=1):
        h = RetrievalHit(record_id=doc_id, rank=rank)
        setattr(h, f"{channel}_score", score)
        hits.append(h)
    return hits


def fuse_rrf(sparse_hits: Sequence[RetrievalHit], dense_hits: Sequence[RetrievalHit],
             c: int = RRF_C, k: int = 10) -> list[RetrievalHit]:
    """Reciprocal rank fusion: each list contributes 1/(c + rank), rank 1-based.

    Ties in fused score break by ascending doc id; channel scores are carried
    through onto the fused hits.
    """
    fused: dict[str, float] = {}
    for hits in (sparse_hits, dense_hits):
        for rank, hit in enumerate(hits, start=1):
            fused[hit.record_id] = fused.get(hit.record_id, 0.0) + 1.0 / (c + rank)
    sparse_by = {h.record_id: h.sparse_score for h in sparse_hits}
    dense_by = {h.record_id: h.dense_score for h in dense_hits}
    ordered = sorted(fused.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
    return [RetrievalHit(record_id=doc_id,
                         sparse_score=sparse_by.get(doc_id, 0.0),
                         dense_score=dense_by.get(doc_id, 0.0),
                         fused_score=score, rank=rank)
            for rank, (doc_id, score) in enumerate(ordered, start=1)]


def minmax_normalize(values: Sequence[float]) -> list[float]:
    if not values:
        return []
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.5] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def rerank(query_tokens: Sequence[str], hits: list[RetrievalHit],
           scorer: Callable[[Sequence[str], Iterable[str]], float],
           doc_tokens: Mapping[str, Iterable[str]],
           weight: float = RERANK_WEIGHT) -> list[RetrievalHit]:
    """final = weight * minmax(fused) + (1 - weight) * scorer overlap.

    If the scorer raises, the fused ordering is kept and every hit is flagged.
    """
    if not hits:
        return []
    normed = minmax_normalize([h.fused_score for h in hits])
    try:
        overlaps = [scorer(query_tokens, doc_tokens[h.record_id]) for h in hits]
    except Exception:
        for h, nv in zip(hits, normed):
            h.final_score = nv
            h.note = "scorer_failed"
        hits.sort(key=lambda h: (-h.fused_score, h.record_id))
        for i, h in enumerate(hits, start=1):
            h.rank = i
        return hits
    for h, nv, ov in zip(hits, normed, overlaps):
        h.final_score = weight * nv + (1.0 - weight) * ov
    hits.sort(key=lambda h: (-h.final_score, h.record_id))
    for i, h in enumerate(hits, start=1):
        h.rank = i
    return hits


# ---------------------------------------------------------------------------
# Relevance decision and threshold calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RelevanceDecision:
    accepted: bool
    top_score: float
    threshold: float
    margin: float

    def to_dict(self) -> dict:
        return {"accepted": self.accepted, "top_score": self.top_score,
                "threshold": self.threshold, "margin": self.margin}


EMPTY_TOP_SCORE = -1.0  # final scores live in [0, 1]; empty results sit below any threshold


def decide_relevance(hits: Sequence[RetrievalHit], threshold: float) -> RelevanceDecision:
    top = hits[0].final_score if hits else EMPTY_TOP_SCORE
    return RelevanceDecision(accepted=bool(hits) and top >= threshold,
                             top_score=top, threshold=threshold,
                             margin=top - threshold)


@dataclass(frozen=True)
class SweepPoint:
    tau: float
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"tau": self.tau if math.isfinite(self.tau) else None,
                "tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class CalibrationResult:
    tau: float
    f1: float
    sweep: tuple[SweepPoint, ...]

    def to_dict(self) -> dict:
        return {"tau": self.tau if math.isfinite(self.tau) else None,
                "never_accept": not math.isfinite(self.tau),
                "f1": self.f1,
                "sweep": [p.to_dict() for p in self.sweep]}


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    if tp == 0:
        return 0.0, 0.0, 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return precision, recall, 2 * precision * recall / (precision + recall)


def calibrate_threshold(observations: Sequence[tuple[float, bool]]) -> CalibrationResult:
    """Pick the acceptance threshold maximizing F1 over scored observations.

    Each observation is (top-1 final score, whether that top-1 hit was truly
    the right answer group). A prediction at threshold t accepts when
    score >= t. Candidate thresholds are the observed scores plus +inf
    (never accept); F1 ties prefer the larger, stricter threshold.
    """
    if not observations:
        raise RetrievalError("calibration needs at least one observation")
    candidates = sorted({s for s, _ in observations if s > EMPTY_TOP_SCORE})
    candidates.append(math.inf)
    sweep = []
    for tau in candidates:
        tp = fp = fn = 0
        for score, correct in observations:
            accepted = score >= tau
            if accepted and correct:
                tp += 1
            elif accepted and not correct:
                fp += 1
            elif not accepted and correct:
                fn += 1
        precision, recall, f1 = _prf(tp, fp, fn)
        sweep.append(SweepPoint(tau=tau, tp=tp, fp=fp, fn=fn,
                                precision=precision, recall=recall, f1=f1))
    best = max(sweep, key=lambda p: (p.f1, p.tau))
    return CalibrationResult(tau=best.tau, f1=best.f1, sweep=tuple(sweep))


# ---------------------------------------------------------------------------
# Retriever facade
# ---------------------------------------------------------------------------

class Retriever:
    """Versioned hybrid index over published records.

    Thread-safe: searches read one immutable snapshot; writers build the
    next snapshot under a lock and swap it in atomically.
    """

    def __init__(self, provider: EmbeddingProvider | None = None,
                 k1: float = K1, b: float = B, rrf_c: int = RRF_C,
                 rerank_weight: float = RERANK_WEIGHT,
                 stopwords: Iterable[str] = ()):
        self.provider = provider or MockEmbeddingProvider()
        self.rrf_c = rrf_c
        self.rerank_weight = rerank_weight
        self.stopwords = tuple(stopwords)
        self._lock = threading.Lock()
        self._snapshot = IndexSnapshot(
            version=0, provider=self.provider, doc_ids=[], texts={},
            groups={}, tokens={}, postings={}, vectors={}, k1=k1, b=b)

    # -- building -----------------------------------------------------------

    @property
    def snapshot(self) -> IndexSnapshot:
        return self._snapshot

    @property
    def version(self) -> int:
        return self._snapshot.version

    def tokenize(self, text: str) -> list[str]:
        return tokenize(text, stopwords=self.stopwords)

    def embed(self, text: str) -> np.ndarray:
        vec = np.asarray(self.provider.embed([text])[0], dtype=np.float64)
        if vec.shape != (self.provider.dimension,):
            raise RetrievalError(
                f"provider returned shape {vec.shape}, expected ({self.provider.dimension},)")
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec = vec / norm
        return vec

    def _entry(self, doc_id: str, text: str, group_id: str):
        toks = tuple(self.tokenize(text))
        return toks, self.embed(text)

    def add_document(self, doc_id: str, text: str, group_id: str) -> int:
        """Index one more document; returns the new index version."""
        return self.add_documents([(doc_id, text, group_id)])

    def add_documents(self, docs: Sequence[tuple[str, str, str]]) -> int:
        with self._lock:
            snap = self._snapshot
            doc_ids = list(snap.doc_ids)
            texts = dict(snap.texts)
            groups = dict(snap.groups)
            tokens = dict(snap.tokens)
            vectors = dict(snap.vectors)
            postings = dict(snap.postings)
            touched: set[str] = set()
            for doc_id, text, group_id in docs:
                if doc_id in texts:
                    raise RetrievalError(f"document {doc_id!r} already indexed")
                toks, vec = self._entry(doc_id, text, group_id)
                doc_ids.append(doc_id)
                texts[doc_id] = text
                groups[doc_id] = group_id
                tokens[doc_id] = toks
                vectors[doc_id] = vec
                counts: dict[str, int] = {}
                for t in toks:
                    counts[t] = counts.get(t, 0) + 1
                for term, tf in counts.items():
                    if term not in touched:
                        postings[term] = list(postings.get(term, ()))
                        touched.add(term)
                    insort(postings[term], (doc_id, tf))
            new = IndexSnapshot(version=snap.version + 1, provider=self.provider,
                                doc_ids=doc_ids, texts=texts, groups=groups,
                                tokens=tokens, postings=postings, vectors=vectors,
                                k1=snap.sparse.k1, b=snap.sparse.b)
            self._snapshot = new
            return new.version

    # -- searching ----------------------------------------------------------

    def search_sparse(self, query: str, k: int = 10) -> list[RetrievalHit]:
        snap = self._snapshot
        return hits_from_scored(
            snap.top_k(snap.sparse_scores(self.tokenize(query)), k), "sparse")

    def search_dense(self, query: str, k: int = 10) -> list[RetrievalHit]:
        snap = self._snapshot
        return hits_from_scored(snap.top_k(snap.dense_scores(self.embed(query)), k),
                                "dense")

    def search(self, query: str, k: int = 10) -> list[RetrievalHit]:
        """Full pipeline: sparse + dense, RRF fusion, overlap re-rank."""
        snap = self._snapshot
        qtokens = self.tokenize(query)
        hits = fuse_rrf(self.search_sparse(query, k), self.search_dense(query, k),
                        c=self.rrf_c, k=k)
        if not hits:
            return []
        return rerank(qtokens, hits, jaccard_overlap, snap.token_sets,
                      weight=self.rerank_weight)

    def decide(self, hits: Sequence[RetrievalHit], threshold: float) -> RelevanceDecision:
        return decide_relevance(hits, threshold)

    def calibrate(self, holdout: Sequence[tuple[str, str]],
                  k: int = 10) -> CalibrationResult:
        """Calibrate the acceptance threshold on (query, expected group) pairs."""
        if not holdout:
            raise RetrievalError("empty holdout")
        known_groups = set(self._snapshot.groups.values())
        missing = {g for _, g in holdout if g not in known_groups}
        if missing:
            raise RetrievalError(f"holdout groups absent from index: {sorted(missing)}")
        observations = []
        for query, group in holdout:
            hits = self.search(query, k=k)
            if hits:
                top = hits[0]
                observations.append((top.final_score,
                                     self._snapshot.groups.get(top.record_id) == group))
            else:
                observations.append((EMPTY_TOP_SCORE, False))
        return calibrate_threshold(observations)

    # -- persistence ----------------------------------------------------------

    def save(self, path: str | Path) -> None:
        snap = self._snapshot
        doc = {
            "schema": SNAPSHOT_SCHEMA,
            "version": snap.version,
            "provider_id": self.provider.provider_id,
            "dimension": self.provider.dimension,
            "k1": snap.sparse.k1,
            "b": snap.sparse.b,
            "stopwords": list(self.stopwords),
            "docs": [
                {"id": d, "text": snap.texts[d], "group_id": snap.groups[d]}
                for d in snap.doc_ids
            ],
        }
        Path(path).write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, provider: EmbeddingProvider | None = None,
             rrf_c: int = RRF_C, rerank_weight: float = RERANK_WEIGHT) -> "Retriever":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("schema") != SNAPSHOT_SCHEMA:
            raise RetrievalError(f"unsupported index schema {doc.get('schema')!r}")
        provider = provider or MockEmbeddingProvider(dimension=doc["dimension"])
        if provider.provider_id != doc["provider_id"]:
            raise RetrievalError(
                f"index built with provider {doc['provider_id']!r}, "
                f"got {provider.provider_id!r}")
        if provider.dimension != doc["dimension"]:
            raise RetrievalError(
                f"index dimension {doc['dimension']} != provider {provider.dimension}")
        r = cls(provider=provider, k1=doc["k1"], b=doc["b"], rrf_c=rrf_c,
                rerank_weight=rerank_weight, stopwords=doc.get("stopwords", ()))
        r.add_documents([(d["id"], d["text"], d["group_id"]) for d in doc["docs"]])
        r._snapshot.version = doc["version"]
        return r
