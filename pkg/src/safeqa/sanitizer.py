"""Rule-driven PII detection and redaction.

Five kinds are covered in v1, all lexicon/pattern based: PHONE, AGE, NAME,
PLACE, ID_NUMBER. Placeholders use the all-ASCII form "[KIND]" so they survive
translation providers unchanged; placeholder spans are inert on re-scan, which
makes redaction idempotent by construction.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .tokenization import scan_tokens


class PiiKind(str, Enum):
    PHONE = "PHONE"
    AGE = "AGE"
    NAME = "NAME"
    PLACE = "PLACE"
    ID_NUMBER = "ID_NUMBER"


PLACEHOLDERS = {kind: f"[{kind.value}]" for kind in PiiKind}
_PLACEHOLDER_RE = re.compile(r"\[(?:PHONE|AGE|NAME|PLACE|ID_NUMBER)\]")
_BARRIER = "\x00"  # stands in for tokens inside placeholders; matches nothing

# age values considered plausible for a caller
AGE_MIN, AGE_MAX = 5, 99
# cue word must appear within this many tokens of the number
AGE_CUE_WINDOW = 2
# lexicon name must start within this many tokens after a self-reference cue
NAME_CUE_GAP = 4


@dataclass(frozen=True)
class PiiSpan:
    """A detected span. Offsets are byte offsets into the UTF-8 encoding of
    the original text and always fall on codepoint boundaries."""

    kind: PiiKind
    start: int
    end: int
    surface: str

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "start": self.start, "end": self.end,
                "surface": self.surface}


@dataclass(frozen=True)
class RedactionResult:
    text: str
    spans: tuple[PiiSpan, ...]
    clean: bool


def _phrases(entries: list[str]) -> list[tuple[str, ...]]:
    """Lexicon entries as lowercase token tuples, longest first."""
    toks = [tuple(t for t, _, _ in scan_tokens(e)) for e in entries]
    toks = [t for t in toks if t]
    return sorted(set(toks), key=len, reverse=True)


@dataclass(frozen=True)
class PiiRules:
    """Immutable rule snapshot; reloads swap the whole object atomically."""

    phone_patterns: tuple[re.Pattern, ...]
    id_patterns: tuple[re.Pattern, ...]
    age_cues: frozenset[str]
    name_cues: tuple[tuple[str, ...], ...]
    name_lexicon: tuple[tuple[str, ...], ...]
    gazetteer: tuple[tuple[str, ...], ...]

    @classmethod
    def from_dict(cls, cfg: dict) -> "PiiRules":
        return cls(
            phone_patterns=tuple(re.compile(p) for p in cfg.get("phone_patterns", [])),
            id_patterns=tuple(re.compile(p) for p in cfg.get("id_patterns", [])),
            age_cues=frozenset(c.lower() for c in cfg.get("age_cues", [])),
            name_cues=tuple(_phrases(cfg.get("name_cues", []))),
            name_lexicon=tuple(_phrases(cfg.get("name_lexicon", []))),
            gazetteer=tuple(_phrases(cfg.get("gazetteer", []))),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "PiiRules":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    @classmethod
    def default(cls) -> "PiiRules":
        text = resources.files("safeqa.data").joinpath("pii_rules.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))


_KIND_ORDER = {k: i for i, k in enumerate(PiiKind)}


def _byte_offsets(text: str, spans: list[tuple[PiiKind, int, int]]) -> list[PiiSpan]:
    """Convert codepoint spans to byte spans via a cumulative byte-length map."""
    cum = [0]
    for c in text:
        cum.append(cum[-1] + len(c.encode("utf-8")))
    return [PiiSpan(kind, cum[s], cum[e], text[s:e]) for kind, s, e in spans]


def detect_pii(text: str, rules: PiiRules | None = None) -> list[PiiSpan]:
    """All maximal rule matches, non-overlapping, sorted by start.

    Overlaps are resolved longest-match-wins, then leftmost. Existing
    placeholders are inert: nothing inside them matches or acts as a cue.
    """
    rules = rules or _DEFAULT.rules
    inert = [(m.start(), m.end()) for m in _PLACEHOLDER_RE.finditer(text)]

    def is_inert(s: int, e: int) -> bool:
        return any(s < ie and is_ < e for is_, ie in inert)

    candidates: list[tuple[PiiKind, int, int]] = []

    for kind, patterns in ((PiiKind.PHONE, rules.phone_patterns),
                           (PiiKind.ID_NUMBER, rules.id_patterns)):
        for pat in patterns:
            for m in pat.finditer(text):
                if not is_inert(m.start(), m.end()):
                    candidates.append((kind, m.start(), m.end()))

    # placeholder-covered tokens stay in the stream as barriers: they occupy
    # positions (so redaction never shrinks cue distances) but match nothing
    # and stop a cue's influence from crossing them
    tokens = [(t if not is_inert(s, e) else _BARRIER, s, e)
              for t, s, e in scan_tokens(text)]
    words = [t for t, _, _ in tokens]

    # AGE: integer 5..99 with a cue word nearby
    for i, (tok, s, e) in enumerate(tokens):
        if not tok.isdigit():
            continue
        try:
            value = int(tok)
        except ValueError:
            continue
        if not AGE_MIN <= value <= AGE_MAX:
            continue
        lo = max(0, i - AGE_CUE_WINDOW)
        hi = min(len(words), i + AGE_CUE_WINDOW + 1)
        fired = False
        for j in range(i - 1, lo - 1, -1):
            if words[j] == _BARRIER:
                break
            if words[j] in rules.age_cues:
                fired = True
                break
        if not fired:
            for j in range(i + 1, hi):
                if words[j] == _BARRIER:
                    break
                if words[j] in rules.age_cues:
                    fired = True
                    break
        if fired:
            candidates.append((PiiKind.AGE, s, e))

    # NAME: lexicon entry shortly after a self-reference cue
    for cue in rules.name_cues:
        n = len(cue)
        for i in range(len(words) - n + 1):
            if tuple(words[i:i + n]) != cue:
                continue
            for j in range(i + n, min(len(words), i + n + NAME_CUE_GAP)):
                if words[j] == _BARRIER:
                    break
                hit = _match_phrase(words, j, rules.name_lexicon)
                if hit:
                    candidates.append((PiiKind.NAME, tokens[j][1], tokens[j + hit - 1][2]))
                    break

    # PLACE: gazetteer match anywhere
    i = 0
    while i < len(words):
        hit = _match_phrase(words, i, rules.gazetteer)
        if hit:
            candidates.append((PiiKind.PLACE, tokens[i][1], tokens[i + hit - 1][2]))
            i += hit
        else:
            i += 1

    # longest match wins, then leftmost; kind order only as a stable last resort
    candidates.sort(key=lambda c: (-(c[2] - c[1]), c[1], _KIND_ORDER[c[0]]))
    chosen: list[tuple[PiiKind, int, int]] = []
    for kind, s, e in candidates:
        if all(e <= cs or s >= ce for _, cs, ce in chosen):
            chosen.append((kind, s, e))
    chosen.sort(key=lambda c: c[1])
    return _byte_offsets(text, chosen)


def _match_phrase(words: list[str], i: int, phrases: tuple[tuple[str, ...], ...]) -> int:
    """Length (in tokens) of the longest phrase starting at `i`, or 0."""
    for ph in phrases:  # sorted longest first
        if tuple(words[i:i + len(ph)]) == ph:
            return len(ph)
    return 0


def redact(text: str, rules: PiiRules | None = None) -> RedactionResult:
    """Replace each detected span with its "[KIND]" placeholder.

    Returned spans carry offsets into the original text, not the redacted one.
    """
    spans = detect_pii(text, rules)
    if not spans:
        return RedactionResult(text=text, spans=(), clean=True)
    raw = text.encode("utf-8")
    out: list[bytes] = []
    pos = 0
    for span in spans:
        out.append(raw[pos:span.start])
        out.append(PLACEHOLDERS[span.kind].encode("ascii"))
        pos = span.end
    out.append(raw[pos:])
    return RedactionResult(text=b"".join(out).decode("utf-8"),
                           spans=tuple(spans), clean=False)


class Sanitizer:
    """Holds the active rule snapshot; `reload` swaps it atomically."""

    def __init__(self, rules: PiiRules | None = None):
        self.rules = rules or PiiRules.default()

    def reload(self, rules: PiiRules) -> None:
        self.rules = rules

    def detect_pii(self, text: str) -> list[PiiSpan]:
        return detect_pii(text, self.rules)

    def redact(self, text: str) -> RedactionResult:
        return redact(text, self.rules)

    def is_clean(self, text: str) -> bool:
        return not detect_pii(text, self.rules)

    def sanitize_record(self, record):
        """Fill `sanitized_question` from `relevant_question`; other fields kept."""
        from .corpus import QARecord  # local import to avoid a cycle

        if not isinstance(record, QARecord):
            raise TypeError("expected a QARecord")
        if not record.relevant_question:
            raise ValueError("nothing to sanitize")
        return record.replace(sanitized_question=self.redact(record.relevant_question).text)


_DEFAULT = Sanitizer()


def sanitize_record(record):
    return _DEFAULT.sanitize_record(record)
