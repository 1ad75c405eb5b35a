"""QA corpus: validation, paraphrase grouping, event-sourced persistence.

Records follow the telephonic-QA schema: raw caller transcription, a trimmed
relevant question, a PII-free sanitized question, one curated answer shared by
every paraphrase in a group, plus theme metadata. The store is an append-only
event log with a materialized snapshot; replaying the log from empty always
reproduces the snapshot.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import random
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional

from .errors import CorpusError
from .sanitizer import Sanitizer

STATUSES = ("draft", "published", "retired")
SOURCES = ("ingest", "moderation")

REQUIRED_FIELDS = ("id", "relevant_question", "sanitized_question", "answer", "theme")

_WS_RUN = re.compile(r"\s+")


def now_utc_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def normalize_answer(text: str) -> str:
    """Trim and collapse internal whitespace runs; no case folding."""
    return _WS_RUN.sub(" ", text.strip())


def answer_group_id(answer: str) -> str:
    digest = hashlib.sha1(normalize_answer(answer).encode("utf-8")).hexdigest()
    return "g" + digest[:12]


@dataclass(frozen=True)
class QARecord:
    id: str
    relevant_question: str
    sanitized_question: str
    answer: str
    theme: str
    sub_theme: str = ""
    caller_query_transcription: str = ""
    group_id: str = ""
    language: str = "en"
    status: str = "published"
    created_at: str = field(default_factory=now_utc_iso)
    source: str = "ingest"

    def replace(self, **changes) -> "QARecord":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "QARecord":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: int = 0
    rejection_reasons: list[tuple[int, str]] = field(default_factory=list)
    groups_formed: int = 0

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "rejection_reasons": [list(r) for r in self.rejection_reasons],
            "groups_formed": self.groups_formed,
        }


def group_paraphrases(records: Iterable[QARecord]) -> dict[str, str]:
    """Map normalized-answer hash -> group id.

    Two records land in one group iff their answers are byte-identical after
    whitespace normalization; ids derive from the answer content, so the
    assignment does not depend on input order.
    """
    groups: dict[str, str] = {}
    for rec in records:
        key = hashlib.sha1(normalize_answer(rec.answer).encode("utf-8")).hexdigest()
        groups.setdefault(key, "g" + key[:12])
    return groups


def validate_record(record: QARecord, sanitizer: Sanitizer) -> Optional[str]:
    """First violated constraint as a reason string, or None when valid."""
    for name in REQUIRED_FIELDS:
        if not getattr(record, name):
            return f"missing field: {name}"
    if record.status not in STATUSES:
        return f"invalid status: {record.status}"
    if record.source not in SOURCES:
        return f"invalid source: {record.source}"
    if not sanitizer.is_clean(record.sanitized_question):
        return "sanitization invariant violated: pii in sanitized_question"
    if not sanitizer.is_clean(record.answer):
        return "pii in answer"
    if record.status == "published" and not (record.answer and record.group_id):
        return "published record needs answer and group_id"
    return None


class CorpusStore:
    """Single-writer, multi-reader record store.

    Readers always see an immutable snapshot reference; commits build a new
    snapshot and swap it under the writer lock. When `directory` is given,
    every event is appended to events.jsonl as it commits, so a restart
    replays to the exact same state.
    """

    def __init__(self, directory: str | Path | None = None,
                 sanitizer: Sanitizer | None = None):
        self.sanitizer = sanitizer or Sanitizer()
        self._lock = threading.Lock()
        self._snapshot: dict[str, QARecord] = {}
        self._version = 0
        self._subscribers: list[Callable[[list[QARecord]], None]] = []
        self._group_answers: dict[str, str] = {}
        self._dir = Path(directory) if directory else None
        if self._dir:
            self._dir.mkdir(parents=True, exist_ok=True)
            self._replay_log()

    # -- read side ----------------------------------------------------------

    @property
    def version(self) -> int:
        return self._version

    def get(self, record_id: str) -> Optional[QARecord]:
        return self._snapshot.get(record_id)

    def records(self) -> list[QARecord]:
        return list(self._snapshot.values())

    def published(self) -> list[QARecord]:
        return [r for r in self._snapshot.values() if r.status == "published"]

    def groups(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for rec in self._snapshot.values():
            out.setdefault(rec.group_id, []).append(rec.id)
        for ids in out.values():
            ids.sort()
        return out

    # -- write side ---------------------------------------------------------

    def subscribe(self, callback: Callable[[list[QARecord]], None]) -> None:
        """Called once per committed batch of newly added records."""
        self._subscribers.append(callback)

    def append_record(self, record: QARecord) -> int:
        """Validate, commit one add event, notify subscribers; returns the
        new version. The store is unchanged on rejection."""
        record = self._canonicalize(record)
        with self._lock:
            reason = self._check_new(record)
            if reason:
                raise CorpusError(reason)
            version = self._commit([("add", record)])
        self._notify([record])
        return version

    def update_status(self, record_id: str, status: str) -> int:
        if status not in STATUSES:
            raise CorpusError(f"invalid status: {status}")
        with self._lock:
            rec = self._snapshot.get(record_id)
            if rec is None:
                raise CorpusError(f"unknown record: {record_id}")
            return self._commit([("update_status", rec.replace(status=status))])

    def ingest_jsonl(self, path: str | Path) -> IngestReport:
        """Load a JSONL corpus file; per-line failures reject that line only.

        Valid records are stored as published with grouping rebuilt from
        answer content. Duplicate ids (in-file or against the store) reject.
        """
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise CorpusError(f"unreadable corpus file: {exc}") from exc
        return self.ingest_lines(lines)

    def ingest_text(self, text: str) -> IngestReport:
        """Ingest a JSONL document passed as one string (HTTP import body)."""
        return self.ingest_lines(text.splitlines())

    def ingest_lines(self, lines: list[str]) -> IngestReport:
        report = IngestReport()
        batch: list[QARecord] = []
        batch_answers: dict[str, str] = {}
        seen: set[str] = set(self._snapshot)
        for lineno, line in enumerate(lines, start=1):
            reason = None
            record = None
            if not line.strip():
                reason = "empty line"
            else:
                try:
                    data = json.loads(line)
                except json.JSONDecodeError:
                    reason = "invalid json"
                else:
                    if not isinstance(data, dict):
                        reason = "not an object"
                    else:
                        missing = [f for f in REQUIRED_FIELDS
                                   if f != "id" and not data.get(f)]
                        if not data.get("id"):
                            reason = "missing field: id"
                        elif missing:
                            reason = f"missing field: {missing[0]}"
                        elif data["id"] in seen:
                            reason = "duplicate id"
                        else:
                            record = self._canonicalize(
                                QARecord.from_dict(data).replace(status="published",
                                                                 source="ingest"))
                            reason = validate_record(record, self.sanitizer)
                            if reason is None:
                                known = batch_answers.get(
                                    record.group_id,
                                    self._group_answers.get(record.group_id))
                                if known is not None and known != record.answer:
                                    reason = "group answer mismatch"
            if reason:
                report.rejected += 1
                report.rejection_reasons.append((lineno, reason))
            else:
                seen.add(record.id)
                batch_answers[record.group_id] = record.answer
                batch.append(record)
                report.accepted += 1

        with self._lock:
            self._commit([("add", rec) for rec in batch])
        self._notify(batch)
        report.groups_formed = len({rec.group_id for rec in batch})
        return report

    def holdout_split(self, seed: int, fraction: float) -> tuple[list[str], list[str]]:
        """Per-group holdout for evaluation.

        Within each multi-member group, floor(n * fraction) records are held
        out, at least 1 and never the whole group; singleton groups stay in
        train. Deterministic for a fixed seed.
        """
        if not 0 < fraction < 1:
            raise CorpusError("fraction must be in (0, 1)")
        groups = [(gid, ids) for gid, ids in sorted(self.groups().items())
                  if len(ids) >= 2]
        if not groups:
            raise CorpusError("nothing to hold out")
        rng = random.Random(seed)
        held: list[str] = []
        for _, ids in groups:
            n = len(ids)
            take = min(n - 1, max(1, math.floor(n * fraction)))
            shuffled = ids[:]
            rng.shuffle(shuffled)
            held.extend(shuffled[:take])
        held_set = set(held)
        train = sorted(r.id for r in self._snapshot.values() if r.id not in held_set)
        return train, sorted(held)

    # -- persistence --------------------------------------------------------

    def save_snapshot(self, path: str | Path | None = None) -> Path:
        path = Path(path) if path else self._dir / "snapshot.jsonl"
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps({"version": self._version}) + "\n")
            for rec in self._snapshot.values():
                f.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")
        return path

    @staticmethod
    def replay(events: Iterable[dict]) -> tuple[dict[str, QARecord], int]:
        """Rebuild (snapshot, version) from raw event dicts."""
        snapshot: dict[str, QARecord] = {}
        version = 0
        for event in events:
            record = QARecord.from_dict(event["record"])
            snapshot[record.id] = record
            version = event["version"]
        return snapshot, version

    # -- internals ----------------------------------------------------------

    def _canonicalize(self, record: QARecord) -> QARecord:
        answer = normalize_answer(record.answer)
        gid = record.group_id or answer_group_id(answer)
        return record.replace(answer=answer, group_id=gid,
                              created_at=record.created_at or now_utc_iso())

    def _check_new(self, record: QARecord) -> Optional[str]:
        if record.id in self._snapshot:
            return "duplicate id"
        reason = validate_record(record, self.sanitizer)
        if reason:
            return reason
        known = self._group_answers.get(record.group_id)
        if known is not None and known != record.answer:
            return "group answer mismatch"
        return None

    def _commit(self, events: list[tuple[str, QARecord]]) -> int:
        """Caller holds the lock. Appends events, swaps the snapshot."""
        if not events:
            return self._version
        new_snapshot = dict(self._snapshot)
        lines = []
        for op, record in events:
            self._version += 1
            new_snapshot[record.id] = record
            self._group_answers[record.group_id] = record.answer
            lines.append(json.dumps(
                {"version": self._version, "op": op, "record": record.to_dict()},
                ensure_ascii=False))
        if self._dir:
            with open(self._dir / "events.jsonl", "a", encoding="utf-8") as f:
                f.write("\n".join(lines) + "\n")
        self._snapshot = new_snapshot
        return self._version

    def _notify(self, records: list[QARecord]) -> None:
        if not records:
            return
        for cb in self._subscribers:
            cb(list(records))

    def _replay_log(self) -> None:
        log = self._dir / "events.jsonl"
        if not log.exists():
            return
        with open(log, encoding="utf-8") as f:
            events = [json.loads(line) for line in f if line.strip()]
        self._snapshot, self._version = self.replay(events)
        self._group_answers = {r.group_id: r.answer for r in self._snapshot.values()}
