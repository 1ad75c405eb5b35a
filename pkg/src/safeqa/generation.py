"""Grounded answer generation for queries the retriever rejects.

Prompts are rendered deterministically: a safety preamble, worked Q/A
examples chosen by retrieval, retrieved context passages labeled with record
ids, and the user query kept in its own slot so untrusted text never mixes
into the instructions.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import ProviderError
from .providers import ChatProvider, PermitGate, with_retries

TEMPERATURE = 0.2
MAX_TOKENS = 512
ICL_EXAMPLES = 3
CONTEXT_PASSAGES = 3

DEFAULT_PREAMBLE = (
    "You are a non-judgemental sexual and reproductive health educator for "
    "rural communities. Rules: never request personal details; refuse "
    "questions outside sexual and reproductive health; if you are not sure, "
    "say \"I don't know\" rather than invent facts; keep answers short, "
    "plain, and stigma-free."
)


@dataclass(frozen=True)
class PromptTemplate:
    system_preamble: str = DEFAULT_PREAMBLE
    language_directive: str = "en"
    examples_header: str = "Reviewed question-answer examples:"
    context_header: str = "Reference passages:"
    query_header: str = "User question:"


@dataclass(frozen=True)
class Prompt:
    """Rendered prompt split into an instruction part and the query part."""

    system: str
    query: str

    @property
    def text(self) -> str:
        return f"{self.system}\n\n{self.query}"

    def messages(self) -> list[dict]:
        return [{"role": "system", "content": self.system},
                {"role": "user", "content": self.query}]


@dataclass(frozen=True)
class GenerationResult:
    text: str
    finish_reason: str = "stop"
    provider_latency: float = 0.0
    token_usage: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"text": self.text, "finish_reason": self.finish_reason,
                "provider_latency": self.provider_latency,
                "token_usage": dict(self.token_usage)}


def select_icl_examples(query: str, k: int, retriever, corpus) -> list[tuple[str, str]]:
    """Top-k retrieval hits as (sanitized question, answer) pairs, one per
    answer group, in descending relevance order. The relevance threshold is
    deliberately ignored: weak matches still guide style and scope."""
    if k <= 0:
        return []
    seen_groups: set[str] = set()
    pairs: list[tuple[str, str]] = []
    for hit in retriever.search(query, k=k):
        record = corpus.get(hit.record_id)
        if record is None or record.group_id in seen_groups:
            continue
        seen_groups.add(record.group_id)
        pairs.append((record.sanitized_question, record.answer))
    return pairs


def build_prompt(query: str, examples: Sequence[tuple[str, str]],
                 context: Sequence[tuple[str, str]],
                 template: PromptTemplate | None = None) -> Prompt:
    """Render the prompt. `context` is (record_id, passage text) pairs.

    The query lands only in the query slot, after the instruction block, so
    prompt-injection text cannot precede or alter the system rules.
    """
    if not query or not query.strip():
        raise ValueError("query slot is mandatory")
    t = template or PromptTemplate()
    parts = [t.system_preamble,
             f"Answer in this language: {t.language_directive}."]
    if examples:
        lines = [t.examples_header]
        for q, a in examples:
            lines.append(f"Q: {q}")
            lines.append(f"A: {a}")
        parts.append("\n".join(lines))
    if context:
        lines = [t.context_header]
        for record_id, passage in context:
            lines.append(f"[ctx:{record_id}] {passage}")
        parts.append("\n".join(lines))
    system = "\n\n".join(parts)
    return Prompt(system=system, query=f"{t.query_header} {query}")


def generate(chat: ChatProvider, prompt: Prompt,
             temperature: float = TEMPERATURE, max_tokens: int = MAX_TOKENS,
             sleeper=time.sleep) -> GenerationResult:
    """One completion with the standard retry policy (2 retries, backoff)."""
    start = time.perf_counter()
    try:
        result = with_retries(
            lambda: chat.complete(prompt.messages(), temperature=temperature,
                                  max_tokens=max_tokens),
            sleeper=sleeper)
    except ProviderError as exc:
        raise ProviderError("provider unavailable", retriable=False) from exc
    latency = time.perf_counter() - start
    return GenerationResult(text=result.text, finish_reason=result.finish_reason,
                            provider_latency=latency, token_usage=result.usage)


class Generator:
    """Stateless facade the pipeline calls; concurrency capped by permits."""

    def __init__(self, chat: ChatProvider, template: PromptTemplate | None = None,
                 temperature: float = TEMPERATURE, max_tokens: int = MAX_TOKENS,
                 icl_k: int = ICL_EXAMPLES, context_k: int = CONTEXT_PASSAGES,
                 permits: int = 8, sleeper=time.sleep):
        self.chat = chat
        self.template = template or PromptTemplate()
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.icl_k = icl_k
        self.context_k = context_k
        self._gate = PermitGate(permits)
        self._sleeper = sleeper

    def answer(self, query: str, retriever, corpus,
               hits: Optional[Sequence] = None) -> tuple[GenerationResult, list[tuple[str, str]]]:
        """Generate a grounded answer; returns the result and the context
        passages used (for output-rail grounding checks)."""
        examples = select_icl_examples(query, self.icl_k, retriever, corpus)
        context: list[tuple[str, str]] = []
        for hit in (hits if hits is not None else retriever.search(query, k=self.context_k)):
            if len(context) >= self.context_k:
                break
            record = corpus.get(hit.record_id)
            if record is not None:
                context.append((record.id, record.answer))
        prompt = build_prompt(query, examples, context, self.template)
        with self._gate:
            result = generate(self.chat, prompt, self.temperature,
                              self.max_tokens, sleeper=self._sleeper)
        return result, context
