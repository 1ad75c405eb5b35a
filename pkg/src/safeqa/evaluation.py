"""Evaluation metrics and harnesses: text similarity (BLEU, ROUGE-L,
BERTScore), repeated-poll hallucination scoring, retrieval generalisability,
noise robustness, and index scalability."""
from __future__ import annotations

import math
import random
import statistics
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .errors import ProviderError, RetrievalError
from .providers import EmbeddingProvider, JudgeProvider
from .retrieval import Retriever
from .tokenization import tokenize


@dataclass
class MetricReport:
    metric: str
    value: float
    per_item: list[tuple[str, float]] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"metric": self.metric, "value": self.value,
                "per_item": [[i, v] for i, v in self.per_item],
                "config": dict(self.config)}


@dataclass
class JudgePoll:
    n: int
    verdicts: list[bool]
    score: float
    partial: bool = False

    def to_dict(self) -> dict:
        return {"n": self.n, "verdicts": list(self.verdicts),
                "score": self.score, "partial": self.partial}


# ---------------------------------------------------------------------------
# Text similarity
# ---------------------------------------------------------------------------

def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, references: Sequence[str], max_n: int = 4) -> float:
    """Sentence BLEU: geometric mean of modified n-gram precisions with add-1
    smoothing on numerator and denominator for n >= 2, times the brevity
    penalty exp(1 - r/c) when the candidate is shorter than the closest
    reference. Orders with zero candidate n-grams are skipped."""
    cand = tokenize(candidate)
    refs = [tokenize(r) for r in references if tokenize(r)]
    if not cand or not refs:
        return 0.0
    log_sum = 0.0
    orders = 0
    for n in range(1, max_n + 1):
        cand_ngrams = _ngrams(cand, n)
        total = sum(cand_ngrams.values())
        if total == 0:
            continue
        matches = 0
        for gram, count in cand_ngrams.items():
            best = max(_ngrams(ref, n).get(gram, 0) for ref in refs)
            matches += min(count, best)
        if n >= 2:
            p = (matches + 1) / (total + 1)
        else:
            if matches == 0:
                return 0.0
            p = matches / total
        log_sum += math.log(p)
        orders += 1
    geo = math.exp(log_sum / orders)
    c = len(cand)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * geo


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> tuple[float, float, float]:
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand or not ref:
        return 0.0, 0.0, 0.0
    lcs = _lcs_length(cand, ref)
    p = lcs / len(cand)
    r = lcs / len(ref)
    f1 = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
    return p, r, f1


def bert_score(candidate: str, reference: str,
               provider: EmbeddingProvider) -> tuple[float, float, float]:
    """Greedy token matching over per-token provider embeddings."""
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand or not ref:
        return 0.0, 0.0, 0.0
    cand_vecs = provider.embed(list(cand))
    ref_vecs = provider.embed(list(ref))

    def cos(u, v):
        return sum(a * b for a, b in zip(u, v))

    p = statistics.fmean(max(cos(cv, rv) for rv in ref_vecs) for cv in cand_vecs)
    r = statistics.fmean(max(cos(rv, cv) for cv in cand_vecs) for rv in ref_vecs)
    f1 = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
    return p, r, f1


def chainpoll_hallucination(response: str, context: Sequence[str],
                            judge: JudgeProvider, n: int = 5) -> JudgePoll:
    """Poll the judge n times; score = fraction of polls asserting the
    response is unsupported. Failed polls are dropped and flagged."""
    if n < 1:
        raise ValueError("n must be >= 1")
    verdicts: list[bool] = []
    failures = 0
    for _ in range(n):
        try:
            verdicts.append(bool(judge.assess(response, list(context))))
        except ProviderError:
            failures += 1
    score = (sum(verdicts) / len(verdicts)) if verdicts else 0.0
    return JudgePoll(n=n, verdicts=verdicts, score=score, partial=failures > 0)


# ---------------------------------------------------------------------------
# Retrieval harnesses
# ---------------------------------------------------------------------------

def retrieval_eval(holdout: Sequence[tuple[str, str]], retriever: Retriever,
                   k: int = 10, tau: float = 0.5) -> dict:
    """Leave-out evaluation: each held-out (query, group) searches the index;
    reports top-1 group accuracy, MRR of the first in-group hit, and the
    acceptance rate at tau."""
    if not holdout:
        raise RetrievalError("empty holdout")
    groups = retriever.snapshot.groups
    per_item = []
    accepted = 0
    for query, group in holdout:
        hits = retriever.search(query, k=k)
        top1 = 1.0 if hits and groups.get(hits[0].record_id) == group else 0.0
        rr = 0.0
        for hit in hits:
            if groups.get(hit.record_id) == group:
                rr = 1.0 / hit.rank
                break
        if hits and hits[0].final_score >= tau:
            accepted += 1
        per_item.append({"query": query, "group": group, "top1": top1,
                         "reciprocal_rank": rr})
    n = len(per_item)
    return {
        "suite": "retrieval",
        "n": n,
        "k": k,
        "tau": tau,
        "top1_group_accuracy": sum(i["top1"] for i in per_item) / n,
        "mrr": sum(i["reciprocal_rank"] for i in per_item) / n,
        "acceptance_rate_at_tau": accepted / n,
        "per_item": per_item,
    }


def perturb_text(text: str, p: float, rng: random.Random) -> str:
    """Character-level noise: each character independently swaps with its
    successor, drops, or duplicates with probability p."""
    chars = list(text)
    out: list[str] = []
    i = 0
    while i < len(chars):
        c = chars[i]
        if rng.random() < p:
            op = rng.choice(("swap", "drop", "dup"))
            if op == "drop":
                i += 1
                continue
            if op == "dup":
                out.append(c)
                out.append(c)
                i += 1
                continue
            if i + 1 < len(chars):
                out.append(chars[i + 1])
                out.append(c)
                i += 2
                continue
        out.append(c)
        i += 1
    return "".join(out)


def robustness_eval(holdout: Sequence[tuple[str, str]], retriever: Retriever,
                    p: float, seed: int, k: int = 10, tau: float = 0.5) -> dict:
    """Re-run retrieval_eval on noised queries and report the degradation."""
    if not 0 <= p <= 0.3:
        raise ValueError("noise level must be in [0, 0.3]")
    baseline = retrieval_eval(holdout, retriever, k=k, tau=tau)
    rng = random.Random(seed)
    noisy_holdout = [(perturb_text(q, p, rng), g) for q, g in holdout]
    noisy = retrieval_eval(noisy_holdout, retriever, k=k, tau=tau)
    return {
        "suite": "robustness",
        "p": p,
        "seed": seed,
        "baseline_accuracy": baseline["top1_group_accuracy"],
        "noisy_accuracy": noisy["top1_group_accuracy"],
        "accuracy_delta": noisy["top1_group_accuracy"] - baseline["top1_group_accuracy"],
        "baseline_mrr": baseline["mrr"],
        "noisy_mrr": noisy["mrr"],
        "noisy_queries": [q for q, _ in noisy_holdout],
        "baseline": baseline,
        "noisy": noisy,
    }


def percentile(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: smallest value with at least q of the mass."""
    if not values:
        return 0.0
    ordered = sorted(values)
    idx = max(0, math.ceil(q * len(ordered)) - 1)
    return ordered[idx]


def scalability_eval(sizes: Sequence[int], seed: int,
                     corpus_factory: Callable[[int, int], list[dict]],
                     probes_per_size: int = 200, k: int = 10,
                     oracle_checks: int = 0,
                     oracle_fn: Optional[Callable] = None) -> dict:
    """Build an index per size and measure build time plus search latency.

    `corpus_factory(n, seed)` yields record dicts with id/sanitized_question/
    group_id. An optional oracle_fn(retriever, query) -> bool spot-checks
    result correctness on sampled probes."""
    rng = random.Random(seed)
    rows = []
    for size in sizes:
        records = corpus_factory(size, seed)
        docs = [(r["id"], r["sanitized_question"], r["group_id"]) for r in records]
        retriever = Retriever()
        t0 = time.perf_counter()
        retriever.add_documents(docs)
        build_seconds = time.perf_counter() - t0
        probes = [rng.choice(docs)[1] for _ in range(probes_per_size)]
        latencies = []
        for query in probes:
            t0 = time.perf_counter()
            retriever.search(query, k=k)
            latencies.append((time.perf_counter() - t0) * 1000.0)
        oracle_ok = None
        if oracle_fn and oracle_checks:
            sample = [rng.choice(probes) for _ in range(oracle_checks)]
            oracle_ok = all(oracle_fn(retriever, q) for q in sample)
        rows.append({
            "docs": size,
            "build_seconds": build_seconds,
            "p50_ms": percentile(latencies, 0.50),
            "p95_ms": percentile(latencies, 0.95),
            "probes": len(probes),
            "oracle_ok": oracle_ok,
        })
    return {"suite": "scalability", "seed": seed, "sizes": rows}


def bias_report(corpus, envelopes: Sequence[dict] = ()) -> dict:
    """Per-theme answer/refusal counts for human inspection of skew.

    Corpus themes always appear; ask outcomes are folded in when an envelope
    log is provided (each envelope needs `theme` attached by the caller)."""
    themes: dict[str, dict] = {}
    for rec in corpus.published():
        row = themes.setdefault(rec.theme, {"records": 0, "groups": set(),
                                            "asks": 0, "answered": 0,
                                            "refused": 0, "escalated": 0})
        row["records"] += 1
        row["groups"].add(rec.group_id)
    for env in envelopes:
        theme = env.get("theme", "(unknown)")
        row = themes.setdefault(theme, {"records": 0, "groups": set(),
                                        "asks": 0, "answered": 0,
                                        "refused": 0, "escalated": 0})
        row["asks"] += 1
        route = env.get("route_taken")
        if route in ("retrieval", "generation"):
            row["answered"] += 1
        elif route == "refusal":
            row["refused"] += 1
        elif route == "escalated":
            row["escalated"] += 1
    table = []
    for theme in sorted(themes):
        row = themes[theme]
        table.append({"theme": theme, "records": row["records"],
                      "groups": len(row["groups"]), "asks": row["asks"],
                      "answered": row["answered"], "refused": row["refused"],
                      "escalated": row["escalated"]})
    return {"suite": "bias", "themes": table}
