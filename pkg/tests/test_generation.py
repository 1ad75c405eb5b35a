import pytest

from safeqa.corpus import CorpusStore, QARecord
from safeqa.errors import ProviderError
from safeqa.generation import (
    Generator,
    Prompt,
    PromptTemplate,
    build_prompt,
    generate,
    select_icl_examples,
)
from safeqa.providers import ChatResult, MockChatProvider, MockEmbeddingProvider
from safeqa.retrieval import Retriever


@pytest.fixture()
def small_world():
    store = CorpusStore()
    rows = [
        ("q1a", "condom kaise use karte hain", "Condom packet dhyan se kholen aur "
         "shuru se pehnen.", "g-condom"),
        ("q1b", "condom use karne ka tarika", "Condom packet dhyan se kholen aur "
         "shuru se pehnen.", "g-condom"),
        ("q2a", "periods me dard kyon hota hai", "Periods ka dard garbhashay ke "
         "sankuchan se hota hai.", "g-periods"),
    ]
    for rid, q, a, g in rows:
        store.append_record(QARecord(id=rid, relevant_question=q,
                                     sanitized_question=q, answer=a,
                                     theme="t", group_id=g))
    r = Retriever(provider=MockEmbeddingProvider(dimension=64))
    r.add_documents([(rec.id, rec.sanitized_question, rec.group_id)
                     for rec in store.published()])
    return store, r


# --- prompt assembly --------------------------------------------------------------

def test_build_prompt_slot_order():
    p = build_prompt("condom kya hai",
                     examples=[("q ek", "a ek"), ("q do", "a do")],
                     context=[("rec-1", "Condom latex ka banta hai.")])
    assert p.system.index("non-judgemental") < p.system.index("Q: q ek")
    assert p.system.index("Q: q ek") < p.system.index("[ctx:rec-1]")
    assert "condom kya hai" not in p.system  # query stays out of instructions
    assert p.query == "User question: condom kya hai"
    assert p.text.endswith(p.query)
    msgs = p.messages()
    assert [m["role"] for m in msgs] == ["system", "user"]


def test_build_prompt_language_directive():
    t = PromptTemplate(language_directive="hi")
    p = build_prompt("sawal", [], [], template=t)
    assert "Answer in this language: hi." in p.system


def test_build_prompt_optional_sections_dropped():
    p = build_prompt("sawal", [], [])
    assert "Reviewed question-answer examples:" not in p.system
    assert "Reference passages:" not in p.system


def test_build_prompt_requires_query():
    with pytest.raises(ValueError):
        build_prompt("", [], [])
    with pytest.raises(ValueError):
        build_prompt("   ", [], [])


def test_build_prompt_deterministic():
    args = ("sawal", [("q", "a")], [("r1", "pass")])
    assert build_prompt(*args) == build_prompt(*args)


# --- icl selection ----------------------------------------------------------------

def test_select_icl_dedupes_groups(small_world):
    store, retriever = small_world
    pairs = select_icl_examples("condom use", k=5, retriever=retriever, corpus=store)
    questions = [q for q, _ in pairs]
    # two condom paraphrases collapse to one example
    assert sum("condom" in q for q in questions) == 1
    assert len(pairs) == len({a for _, a in pairs})


def test_select_icl_k_zero(small_world):
    store, retriever = small_world
    assert select_icl_examples("condom", 0, retriever, store) == []


def test_select_icl_ignores_threshold(small_world):
    store, retriever = small_world
    # weak lexical match still yields style examples
    pairs = select_icl_examples("dard", k=3, retriever=retriever, corpus=store)
    assert pairs and pairs[0][0].startswith("periods")


# --- generation -------------------------------------------------------------------

def test_generate_retries_then_succeeds():
    calls = []

    class Flaky:
        provider_id = "stub"

        def complete(self, messages, temperature, max_tokens):
            calls.append(1)
            if len(calls) < 2:
                raise ProviderError("blip", retriable=True)
            return ChatResult(text="theek hai")

    out = generate(Flaky(), Prompt(system="s", query="q"), sleeper=lambda _: None)
    assert out.text == "theek hai"
    assert len(calls) == 2
    assert out.provider_latency >= 0.0


def test_generate_wraps_exhausted_failure():
    class Down:
        provider_id = "stub"

        def complete(self, messages, temperature, max_tokens):
            raise ProviderError("down", retriable=True)

    with pytest.raises(ProviderError, match="provider unavailable"):
        generate(Down(), Prompt(system="s", query="q"), sleeper=lambda _: None)


def test_generator_passes_context_and_settings(small_world):
    store, retriever = small_world
    seen = {}

    class Spy:
        provider_id = "stub"

        def complete(self, messages, temperature, max_tokens):
            seen.update(messages=messages, temperature=temperature,
                        max_tokens=max_tokens)
            return ChatResult(text="jawab")

    gen = Generator(Spy(), temperature=0.4, max_tokens=99, sleeper=lambda _: None)
    result, context = gen.answer("condom kaise use karen", retriever, store)
    assert result.text == "jawab"
    assert seen["temperature"] == 0.4 and seen["max_tokens"] == 99
    assert seen["messages"][0]["role"] == "system"
    # context passages are (record_id, answer) pairs drawn from retrieval
    assert context and all(store.get(rid).answer == text for rid, text in context)
    assert len(context) <= gen.context_k
    joined = seen["messages"][0]["content"]
    for rid, _ in context:
        assert f"[ctx:{rid}]" in joined


def test_generator_respects_precomputed_hits(small_world):
    store, retriever = small_world
    hits = retriever.search("periods dard", k=3)
    gen = Generator(MockChatProvider(), sleeper=lambda _: None)
    _, context = gen.answer("periods dard", retriever, store, hits=hits)
    assert context[0][0] == hits[0].record_id


def test_generator_with_mock_chat_echoes_top_context(small_world):
    store, retriever = small_world
    gen = Generator(MockChatProvider(), sleeper=lambda _: None)
    result, context = gen.answer("condom kaise use karen", retriever, store)
    assert result.finish_reason == "stop"
    assert context[0][0] in result.text
