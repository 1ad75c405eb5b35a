"""Input and output rails with graded enforcement actions.

A rail inspects text (plus retrieval context where relevant) and proposes an
action; the verdict for a stage is the maximum-severity action among all
triggered rules, ordered Allow < Redact < Escalate < Refuse. Refuse outranks
Escalate so provably abusive input never enters the human review queue
verbatim.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import IntEnum
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .sanitizer import Sanitizer, RedactionResult
from .tokenization import tokenize

THETA_TOPIC = 0.05
GROUNDING_MIN = 0.3

REFUSAL_TEMPLATE = (
    "I can't help with that request. If you have a question about sexual or "
    "reproductive health, please ask it plainly, or call the helpline to "
    "speak with a trained educator."
)
ESCALATION_TEMPLATE = (
    "I want to make sure you get an accurate answer, so I've passed your "
    "question to a human health educator for review. Reference: {queue_ref}."
)


class Action(IntEnum):
    """Enforcement actions ordered by severity."""

    ALLOW = 0
    REDACT = 1
    ESCALATE = 2
    REFUSE = 3

    @property
    def label(self) -> str:
        return self.name.lower()


def parse_action(name: str) -> Action:
    try:
        return Action[name.upper()]
    except KeyError:
        raise ValueError(f"unknown action {name!r}") from None


STAGES = ("input", "output")
KINDS = ("blocklist", "pattern", "pii", "topic", "grounding")


@dataclass(frozen=True)
class RailRule:
    id: str
    stage: str
    kind: str
    action: Action
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"rule {self.id}: bad stage {self.stage!r}")
        if self.kind not in KINDS:
            raise ValueError(f"rule {self.id}: bad kind {self.kind!r}")


@dataclass(frozen=True)
class Verdict:
    action: Action
    triggered: tuple[str, ...] = ()
    transformed_text: Optional[str] = None
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "action": self.action.label,
            "triggered": list(self.triggered),
            "transformed_text": self.transformed_text,
            "notes": list(self.notes),
        }


ALLOW_VERDICT = Verdict(action=Action.ALLOW)


@dataclass
class RailReport:
    input_verdict: Verdict
    output_verdict: Optional[Verdict] = None
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "input_verdict": self.input_verdict.to_dict(),
            "output_verdict": self.output_verdict.to_dict() if self.output_verdict else None,
            "timings": dict(self.timings),
        }


def compose_verdict(fired: Sequence[tuple[RailRule, Optional[str]]],
                    transformed_text: Optional[str] = None,
                    extra_notes: Sequence[str] = ()) -> Verdict:
    """Combine triggered rules into one verdict: max severity wins."""
    if not fired:
        if extra_notes:
            return Verdict(action=Action.ALLOW, notes=tuple(extra_notes))
        return ALLOW_VERDICT
    action = max(rule.action for rule, _ in fired)
    notes = tuple(note for _, note in fired if note) + tuple(extra_notes)
    return Verdict(action=action,
                   triggered=tuple(rule.id for rule, _ in fired),
                   transformed_text=transformed_text if action == Action.REDACT else None,
                   notes=notes)


# ---------------------------------------------------------------------------
# Matchers
# ---------------------------------------------------------------------------

def _contains_phrase(tokens: Sequence[str], phrase_tokens: Sequence[str]) -> bool:
    n = len(phrase_tokens)
    if n == 0 or n > len(tokens):
        return False
    target = tuple(phrase_tokens)
    return any(tuple(tokens[i:i + n]) == target for i in range(len(tokens) - n + 1))


class _PatternMatcher:
    def __init__(self, patterns: Iterable[str]):
        self.regexes = [re.compile(p, re.IGNORECASE) for p in patterns]

    def matches(self, text: str) -> bool:
        return any(r.search(text) for r in self.regexes)


class _BlocklistMatcher:
    def __init__(self, phrases: Iterable[str]):
        self.phrases = [tuple(tokenize(p)) for p in phrases if p.strip()]

    def matches(self, text: str) -> bool:
        tokens = tokenize(text)
        return any(_contains_phrase(tokens, p) for p in self.phrases)


def parse_wordlist(text: str) -> list[str]:
    """One phrase per line; blank lines and # comments skipped."""
    return [ln.strip() for ln in text.splitlines()
            if ln.strip() and not ln.lstrip().startswith("#")]


def load_wordlist(path: str | Path) -> list[str]:
    return parse_wordlist(Path(path).read_text(encoding="utf-8"))


def grounding_recall(response: str, context: Sequence[str],
                     stopwords: Iterable[str] = ()) -> float:
    """Fraction of response content tokens that appear in the context."""
    stop = frozenset(stopwords)
    resp_tokens = [t for t in tokenize(response) if t not in stop]
    if not resp_tokens:
        return 1.0
    ctx_tokens: set[str] = set()
    for passage in context:
        ctx_tokens.update(tokenize(passage))
    return sum(1 for t in resp_tokens if t in ctx_tokens) / len(resp_tokens)


# ---------------------------------------------------------------------------
# Rule set
# ---------------------------------------------------------------------------

class RuleSet:
    """Immutable, pre-compiled snapshot of rail rules."""

    def __init__(self, rules: Sequence[RailRule], base_dir: Path | None = None,
                 reader: Callable[[str], str] | None = None):
        """`reader(path) -> text` resolves blocklist payload paths; defaults
        to the filesystem relative to base_dir."""
        ids = [r.id for r in rules]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate rule ids")
        if reader is None:
            def reader(rel: str) -> str:
                p = Path(rel)
                if not p.is_absolute() and base_dir is not None:
                    p = base_dir / p
                return p.read_text(encoding="utf-8")
        self.rules = tuple(rules)
        self._matchers: dict[str, object] = {}
        for rule in rules:
            if rule.kind == "pattern":
                self._matchers[rule.id] = _PatternMatcher(rule.payload.get("patterns", ()))
            elif rule.kind == "blocklist":
                phrases = list(rule.payload.get("phrases", ()))
                path = rule.payload.get("path")
                if path:
                    phrases.extend(parse_wordlist(reader(path)))
                self._matchers[rule.id] = _BlocklistMatcher(phrases)

    def stage_rules(self, stage: str) -> list[RailRule]:
        return [r for r in self.rules if r.stage == stage]

    def with_thresholds(self, theta_topic: float, grounding_min: float) -> "RuleSet":
        """Copy of this rule set with the tunable thresholds replaced.
        Compiled matchers are shared: threshold rules have none."""
        rules = []
        for rule in self.rules:
            if rule.kind == "topic":
                rule = RailRule(id=rule.id, stage=rule.stage, kind=rule.kind,
                                action=rule.action,
                                payload=dict(rule.payload, theta=theta_topic))
            elif rule.kind == "grounding":
                rule = RailRule(id=rule.id, stage=rule.stage, kind=rule.kind,
                                action=rule.action,
                                payload=dict(rule.payload, g=grounding_min))
            rules.append(rule)
        clone = object.__new__(RuleSet)
        clone.rules = tuple(rules)
        clone._matchers = self._matchers
        return clone

    def matcher(self, rule_id: str):
        return self._matchers[rule_id]

    @classmethod
    def from_list(cls, raw: Sequence[dict], base_dir: Path | None = None,
                  reader: Callable[[str], str] | None = None) -> "RuleSet":
        rules = [RailRule(id=d["id"], stage=d["stage"], kind=d["kind"],
                          action=parse_action(d["action"]),
                          payload=d.get("payload", {})) for d in raw]
        return cls(rules, base_dir=base_dir, reader=reader)

    @classmethod
    def from_file(cls, path: str | Path) -> "RuleSet":
        p = Path(path)
        return cls.from_list(json.loads(p.read_text(encoding="utf-8")), base_dir=p.parent)

    @classmethod
    def default(cls) -> "RuleSet":
        pkg = resources.files("safeqa.data")
        raw = json.loads(pkg.joinpath("rail_rules.json").read_text(encoding="utf-8"))
        return cls.from_list(
            raw, reader=lambda rel: pkg.joinpath(rel).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Rails
# ---------------------------------------------------------------------------

class Guardrails:
    """Evaluates input and output rails against one rule-set snapshot."""

    def __init__(self, ruleset: RuleSet | None = None,
                 sanitizer: Sanitizer | None = None):
        self.ruleset = ruleset or RuleSet.default()
        self.sanitizer = sanitizer or Sanitizer()

    def reload(self, ruleset: RuleSet) -> None:
        self.ruleset = ruleset

    def check_input(self, query: str, top_score: Optional[float] = None,
                    skip_topic: bool = False) -> Verdict:
        """Evaluate input rails in order: injection patterns, abuse blocklist,
        PII redaction, then the off-topic gate against the retrieval score.

        `top_score` is the best final retrieval score for the (already
        redacted) query, or None when nothing was retrieved. `skip_topic`
        lets callers defer the topic rule when retrieval has not run yet.
        """
        fired: list[tuple[RailRule, Optional[str]]] = []
        transformed: Optional[str] = None
        text_for_rules = query
        for rule in self.ruleset.stage_rules("input"):
            if rule.kind == "pattern":
                if self.ruleset.matcher(rule.id).matches(query):
                    fired.append((rule, None))
            elif rule.kind == "blocklist":
                if self.ruleset.matcher(rule.id).matches(query):
                    fired.append((rule, None))
            elif rule.kind == "pii":
                result = self.sanitizer.redact(query)
                if not result.clean:
                    transformed = result.text
                    text_for_rules = result.text
                    kinds = sorted({s.kind for s in result.spans})
                    fired.append((rule, "pii:" + ",".join(kinds)))
            elif rule.kind == "topic":
                if skip_topic:
                    continue
                theta = float(rule.payload.get("theta", THETA_TOPIC))
                if top_score is None or top_score < theta:
                    fired.append((rule, "off-topic"))
        return compose_verdict(fired, transformed_text=transformed)

    def check_output(self, response: str, context: Sequence[str]) -> Verdict:
        """Evaluate output rails: PII leaks, toxicity, lexical grounding."""
        fired: list[tuple[RailRule, Optional[str]]] = []
        transformed: Optional[str] = None
        extra_notes: list[str] = []
        for rule in self.ruleset.stage_rules("output"):
            if rule.kind == "pii":
                result = self.sanitizer.redact(response)
                if not result.clean:
                    transformed = result.text
                    kinds = sorted({s.kind for s in result.spans})
                    fired.append((rule, "pii:" + ",".join(kinds)))
            elif rule.kind == "blocklist":
                if self.ruleset.matcher(rule.id).matches(response):
                    fired.append((rule, None))
            elif rule.kind == "grounding":
                if not context:
                    # nothing to ground against; record why the rule was skipped
                    extra_notes.append("ungrounded-by-construction")
                    continue
                g = float(rule.payload.get("g", GROUNDING_MIN))
                recall = grounding_recall(response, context,
                                          rule.payload.get("stopwords", ()))
                if recall < g:
                    fired.append((rule, "low grounding"))
        return compose_verdict(fired, transformed_text=transformed,
                               extra_notes=extra_notes)


def enforce(verdict: Verdict, payload: str,
            refusal_template: str = REFUSAL_TEMPLATE,
            escalation_template: str = ESCALATION_TEMPLATE,
            queue_ref: str = "pending") -> str:
    """Apply a verdict to the text it governs."""
    if verdict.action == Action.ALLOW:
        return payload
    if verdict.action == Action.REDACT:
        return verdict.transformed_text if verdict.transformed_text is not None else payload
    if verdict.action == Action.REFUSE:
        return refusal_template
    return escalation_template.format(queue_ref=queue_ref)
