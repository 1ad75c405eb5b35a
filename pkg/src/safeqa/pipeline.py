"""Request orchestration: input phase, retrieve-or-generate, output phase,
and the human-escalation loop that feeds answers back into the index.

Every request produces exactly one envelope with one of five routes:
retrieval, generation, refusal, escalated, error. Raw query text stops
existing past the input rails; everything downstream (logs, moderation
items, prompts) sees only the redacted form.
"""
from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .corpus import CorpusStore, QARecord, now_utc_iso
from .errors import ModerationError, ProviderError
from .generation import Generator
from .guardrails import (Action, Guardrails, RailReport, Verdict, enforce,
                         ESCALATION_TEMPLATE, REFUSAL_TEMPLATE)
from .langbridge import AudioRef, LangBridge, LanguageRoute
from .retrieval import RelevanceDecision, Retriever, decide_relevance

log = logging.getLogger("safeqa.pipeline")

ROUTES = ("retrieval", "generation", "refusal", "escalated", "error")
MODERATION_REASONS = ("off_topic", "low_relevance_and_generation_unavailable",
                      "output_escalated", "rail_escalated")
ERROR_TEMPLATE = ("Sorry, I could not process your question right now. "
                  "Please try again, or call the helpline to talk to a person.")


@dataclass(frozen=True)
class AskRequest:
    query_text: Optional[str] = None
    audio: Optional[AudioRef] = None
    language: str = "hi"
    session_id: str = ""
    route: Optional[LanguageRoute] = None

    def __post_init__(self):
        if (self.query_text is None) == (self.audio is None):
            raise ValueError("exactly one of query_text/audio required")


@dataclass
class AnswerEnvelope:
    answer_text: str
    route_taken: str
    relevance: Optional[RelevanceDecision]
    rail_report: RailReport
    corpus_version: int
    index_version: int = 0
    answer_audio: Optional[AudioRef] = None
    provenance: Optional[dict] = None
    moderation_id: Optional[str] = None
    timings: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "answer_text": self.answer_text,
            "answer_audio": {"uri": self.answer_audio.uri,
                             "format": self.answer_audio.format}
            if self.answer_audio else None,
            "route_taken": self.route_taken,
            "relevance": self.relevance.to_dict() if self.relevance else None,
            "provenance": self.provenance,
            "moderation_id": self.moderation_id,
            "rail_report": self.rail_report.to_dict(),
            "timings": dict(self.timings),
            "corpus_version": self.corpus_version,
            "index_version": self.index_version,
            "warnings": list(self.warnings),
        }


@dataclass
class ModerationItem:
    id: str
    query_text: str  # always redacted
    reason: str
    created_at: str = ""
    status: str = "open"  # open | resolved | dismissed
    resolution: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"id": self.id, "query_text": self.query_text,
                "reason": self.reason, "created_at": self.created_at,
                "status": self.status, "resolution": self.resolution}

    @classmethod
    def from_dict(cls, d: dict) -> "ModerationItem":
        return cls(id=d["id"], query_text=d["query_text"], reason=d["reason"],
                   created_at=d.get("created_at", ""),
                   status=d.get("status", "open"),
                   resolution=d.get("resolution"))


def _dedup_key(redacted_text: str, when_iso: str) -> str:
    day = when_iso[:10]
    digest = hashlib.sha1(redacted_text.encode("utf-8")).hexdigest()[:16]
    return f"{day}:{digest}"


class ModerationStore:
    """Append-only moderation queue with the same event-log durability story
    as the corpus: replay events.jsonl on start, single writer, snapshot
    reads. Identical redacted text escalated twice on the same UTC day maps
    to the existing open item instead of a new one."""

    def __init__(self, directory: str | Path | None = None):
        self._lock = threading.Lock()
        self._items: dict[str, ModerationItem] = {}
        self._order: list[str] = []  # insertion order, oldest first
        self._dedup: dict[str, str] = {}
        self._seq = 0
        self._dir = Path(directory) if directory else None
        if self._dir:
            self._dir.mkdir(parents=True, exist_ok=True)
            self._replay()

    def _append_event(self, op: str, item: ModerationItem) -> None:
        if not self._dir:
            return
        with open(self._dir / "events.jsonl", "a", encoding="utf-8") as f:
            f.write(json.dumps({"op": op, "item": item.to_dict()},
                               ensure_ascii=False) + "\n")

    def _replay(self) -> None:
        path = self._dir / "events.jsonl"
        if not path.exists():
            return
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                event = json.loads(line)
                item = ModerationItem.from_dict(event["item"])
                self._apply(item)

    def _apply(self, item: ModerationItem) -> None:
        if item.id not in self._items:
            self._order.append(item.id)
            seq = int(item.id.split("-")[-1])
            self._seq = max(self._seq, seq)
        self._items[item.id] = item
        if item.status == "open":
            self._dedup[_dedup_key(item.query_text, item.created_at)] = item.id

    def escalate(self, redacted_text: str, reason: str) -> ModerationItem:
        if reason not in MODERATION_REASONS:
            raise ModerationError(f"unknown reason {reason!r}")
        with self._lock:
            now = now_utc_iso()
            key = _dedup_key(redacted_text, now)
            existing = self._dedup.get(key)
            if existing and self._items[existing].status == "open":
                return self._items[existing]
            self._seq += 1
            item = ModerationItem(id=f"mod-{self._seq:06d}",
                                  query_text=redacted_text, reason=reason,
                                  created_at=now)
            self._items[item.id] = item
            self._order.append(item.id)
            self._dedup[key] = item.id
            self._append_event("escalate", item)
            return item

    def get(self, item_id: str) -> Optional[ModerationItem]:
        return self._items.get(item_id)

    def list_items(self, status: Optional[str] = None,
                   cursor: Optional[str] = None,
                   limit: int = 50) -> tuple[list[ModerationItem], Optional[str]]:
        """Newest first; `cursor` is the last item id of the previous page."""
        ordered = [self._items[i] for i in reversed(self._order)]
        if status:
            ordered = [it for it in ordered if it.status == status]
        if cursor:
            ids = [it.id for it in ordered]
            if cursor not in ids:
                raise ModerationError(f"invalid cursor {cursor!r}",
                                      code="bad_cursor")
            ordered = ordered[ids.index(cursor) + 1:]
        page = ordered[:limit]
        next_cursor = page[-1].id if len(ordered) > limit else None
        return page, next_cursor

    def _transition(self, item_id: str, status: str,
                    resolution: Optional[dict] = None) -> ModerationItem:
        with self._lock:
            item = self._items.get(item_id)
            if item is None:
                raise ModerationError(f"no such item {item_id!r}", code="not_found")
            if item.status != "open":
                raise ModerationError(f"item {item_id} is not open",
                                      code="not_open")
            updated = ModerationItem(id=item.id, query_text=item.query_text,
                                     reason=item.reason,
                                     created_at=item.created_at,
                                     status=status, resolution=resolution)
            self._items[item_id] = updated
            self._dedup.pop(_dedup_key(item.query_text, item.created_at), None)
            self._append_event(status, updated)
            return updated

    def resolve(self, item_id: str, resolution: dict) -> ModerationItem:
        return self._transition(item_id, "resolved", resolution)

    def dismiss(self, item_id: str) -> ModerationItem:
        return self._transition(item_id, "dismissed")


class Engine:
    """Wires corpus, retriever, rails, generator, langbridge, and the
    moderation queue into the ask/escalate/resolve loop."""

    def __init__(self, corpus: CorpusStore, retriever: Retriever,
                 rails: Guardrails, generator: Generator,
                 bridge: LangBridge, moderation: ModerationStore,
                 tau: float = 0.5, search_k: int = 10):
        self.corpus = corpus
        self.retriever = retriever
        self.rails = rails
        self.generator = generator
        self.bridge = bridge
        self.moderation = moderation
        self.tau = tau
        self.search_k = search_k
        self._index_published(corpus.published())
        corpus.subscribe(self._on_records)

    # -- index wiring ---------------------------------------------------------

    def _index_published(self, records: Sequence[QARecord]) -> None:
        docs = [(r.id, r.sanitized_question, r.group_id) for r in records
                if r.status == "published"
                and r.id not in self.retriever.snapshot.texts]
        if docs:
            self.retriever.add_documents(docs)

    def _on_records(self, records: list[QARecord]) -> None:
        self._index_published(records)

    # -- ask ------------------------------------------------------------------

    def answer(self, request: AskRequest) -> AnswerEnvelope:
        timings: dict[str, float] = {}
        warnings: list[str] = []
        corpus_version = self.corpus.version

        def envelope(**kw) -> AnswerEnvelope:
            env = AnswerEnvelope(corpus_version=corpus_version,
                                 index_version=self.retriever.version,
                                 timings=timings, warnings=warnings, **kw)
            log.info("route=%s corpus_version=%d", env.route_taken, corpus_version)
            return env

        # input phase: audio/text to pipeline-language text
        t0 = time.perf_counter()
        try:
            inbound = self.bridge.inbound(text=request.query_text,
                                          audio=request.audio)
        except Exception as exc:
            timings["inbound"] = time.perf_counter() - t0
            warnings.append(f"inbound failed: {exc}")
            return envelope(answer_text=ERROR_TEMPLATE, route_taken="error",
                            relevance=None,
                            rail_report=RailReport(input_verdict=Verdict(Action.ALLOW)))
        timings["inbound"] = time.perf_counter() - t0
        query = inbound.text

        # input rails; the topic rule needs retrieval, so it runs second
        t0 = time.perf_counter()
        verdict = self.rails.check_input(query, skip_topic=True)
        # raw text must not survive this point: redact unconditionally
        redacted = self.rails.sanitizer.redact(query).text
        log.info("input rails action=%s triggered=%s query=%r",
                 verdict.action.label, list(verdict.triggered), redacted)
        timings["input_rails"] = time.perf_counter() - t0

        if verdict.action == Action.REFUSE:
            report = RailReport(input_verdict=verdict, timings=dict(timings))
            return self._finish(envelope, REFUSAL_TEMPLATE, "refusal", None,
                                report, timings)

        # retrieval on redacted text only
        t0 = time.perf_counter()
        hits = self.retriever.search(redacted, k=self.search_k)
        timings["retrieval"] = time.perf_counter() - t0
        top_score = hits[0].final_score if hits else None

        # an empty index carries no topic signal; the rule would otherwise
        # escalate every query on a fresh deployment
        empty_index = not self.retriever.snapshot.doc_ids
        topic_verdict = self.rails.check_input(redacted, top_score=top_score,
                                               skip_topic=empty_index)
        merged = self._merge_input_verdicts(verdict, topic_verdict, redacted)
        report = RailReport(input_verdict=merged, timings=dict(timings))

        if merged.action == Action.ESCALATE:
            kinds = {r.id: r.kind for r in self.rails.ruleset.rules}
            reason = ("off_topic"
                      if any(kinds.get(t) == "topic" for t in merged.triggered)
                      else "rail_escalated")
            return self._escalated(envelope, redacted, reason, report, timings)

        decision = decide_relevance(hits, self.tau)
        if decision.accepted:
            record = self.corpus.get(hits[0].record_id)
            if record is not None:
                return self._emit_answer(envelope, record.answer,
                                         context=[record.answer],
                                         route="retrieval",
                                         provenance={"record_id": record.id,
                                                     "group_id": record.group_id},
                                         relevance=decision, report=report,
                                         timings=timings, redacted=redacted)
            warnings.append(f"hit {hits[0].record_id} missing from corpus")

        # generation fallback
        t0 = time.perf_counter()
        try:
            result, context = self.generator.answer(redacted, self.retriever,
                                                    self.corpus, hits=hits)
        except ProviderError:
            timings["generation"] = time.perf_counter() - t0
            return self._escalated(envelope, redacted,
                                   "low_relevance_and_generation_unavailable",
                                   report, timings)
        timings["generation"] = time.perf_counter() - t0

        if result.finish_reason == "filtered":
            # a refusal envelope must carry a Refuse verdict in its report
            report.output_verdict = Verdict(action=Action.REFUSE,
                                            triggered=("provider-content-filter",))
            return self._finish(envelope, REFUSAL_TEMPLATE, "refusal",
                                decision, report, timings)

        return self._emit_answer(envelope, result.text,
                                 context=[c for _, c in context],
                                 route="generation",
                                 provenance={"provider_id": self.generator.chat.provider_id,
                                             "finish_reason": result.finish_reason,
                                             "context_ids": [rid for rid, _ in context],
                                             "latency": result.provider_latency},
                                 relevance=decision, report=report,
                                 timings=timings, redacted=redacted)

    def _merge_input_verdicts(self, first: Verdict, topic: Verdict,
                              redacted: str) -> Verdict:
        triggered = tuple(dict.fromkeys(first.triggered + topic.triggered))
        action = max(first.action, topic.action)
        notes = tuple(dict.fromkeys(first.notes + topic.notes))
        had_pii = (first.transformed_text is not None
                   or topic.transformed_text is not None)
        return Verdict(action=action, triggered=triggered,
                       transformed_text=redacted
                       if action == Action.REDACT and had_pii else None,
                       notes=notes)

    def _emit_answer(self, envelope, text: str, context: list[str], route: str,
                     provenance: dict, relevance, report: RailReport,
                     timings: dict, redacted: str) -> AnswerEnvelope:
        t0 = time.perf_counter()
        out_verdict = self.rails.check_output(text, context)
        timings["output_rails"] = time.perf_counter() - t0
        report.output_verdict = out_verdict
        report.timings = dict(timings)

        if out_verdict.action == Action.REFUSE:
            return self._finish(envelope, REFUSAL_TEMPLATE, "refusal",
                                relevance, report, timings)
        if out_verdict.action == Action.ESCALATE:
            return self._escalated(envelope, redacted, "output_escalated",
                                   report, timings, relevance=relevance)
        final = enforce(out_verdict, text)
        return self._finish(envelope, final, route, relevance, report, timings,
                            provenance=provenance)

    def _escalated(self, envelope, redacted: str, reason: str,
                   report: RailReport, timings: dict,
                   relevance=None) -> AnswerEnvelope:
        try:
            item = self.moderation.escalate(redacted, reason)
        except Exception as exc:
            log.error("escalation failed: %s", exc)
            return envelope(answer_text=ERROR_TEMPLATE, route_taken="error",
                            relevance=relevance, rail_report=report)
        text = ESCALATION_TEMPLATE.format(queue_ref=item.id)
        env = self._finish(envelope, text, "escalated", relevance, report,
                           timings)
        env.moderation_id = item.id
        return env

    def _finish(self, envelope, text: str, route: str, relevance,
                report: RailReport, timings: dict,
                provenance: Optional[dict] = None) -> AnswerEnvelope:
        t0 = time.perf_counter()
        outbound = self.bridge.outbound(text)
        timings["outbound"] = time.perf_counter() - t0
        report.timings = dict(timings)
        env = envelope(answer_text=outbound.text, route_taken=route,
                       relevance=relevance, rail_report=report,
                       provenance=provenance)
        env.answer_audio = outbound.audio
        env.warnings.extend(outbound.warnings)
        return env

    # -- moderation loop --------------------------------------------------------

    def resolve_moderation(self, item_id: str, answer: str, theme: str,
                           sub_theme: str = "") -> tuple[QARecord, int, int]:
        """Publish a moderator's answer for an escalated question. The new
        record becomes retrievable immediately."""
        item = self.moderation.get(item_id)
        if item is None:
            raise ModerationError(f"no such item {item_id!r}", code="not_found")
        if item.status != "open":
            raise ModerationError(f"item {item_id} is not open", code="not_open")
        if not answer or not answer.strip():
            raise ModerationError("answer must be non-empty", code="rail_rejected")
        verdict = self.rails.check_output(answer, [])
        if verdict.action != Action.ALLOW:
            raise ModerationError(
                f"answer rejected by output rails: action={verdict.action.label}, "
                f"triggered={list(verdict.triggered)}",
                code="rail_rejected", verdict=verdict)
        record = QARecord(id=f"rec-{item_id}",
                          relevant_question=item.query_text,
                          sanitized_question=item.query_text,
                          answer=answer, theme=theme, sub_theme=sub_theme,
                          source="moderation", status="published")
        corpus_version = self.corpus.append_record(record)
        self.moderation.resolve(item_id, {"answer": answer, "theme": theme,
                                          "sub_theme": sub_theme,
                                          "record_id": record.id})
        log.info("resolved %s into %s", item_id, record.id)
        return self.corpus.get(record.id), corpus_version, self.retriever.version
