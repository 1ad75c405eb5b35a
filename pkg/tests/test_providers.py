import json

import pytest

from safeqa.errors import ProviderError
from safeqa.providers import (
    ChatJudgeProvider,
    ChatResult,
    MockAsrProvider,
    MockChatProvider,
    MockEmbeddingProvider,
    MockJudgeProvider,
    MockMtProvider,
    MockTtsProvider,
    ScriptedJudgeProvider,
    with_retries,
)


# --- retry wrapper --------------------------------------------------------------

def test_with_retries_retriable_then_success():
    attempts = []
    sleeps = []

    def flaky():
        attempts.append(1)
        if len(attempts) < 3:
            raise ProviderError("blip", retriable=True)
        return "ok"

    assert with_retries(flaky, sleeper=sleeps.append) == "ok"
    assert len(attempts) == 3
    # exponential backoff: base then base*factor
    assert sleeps == [0.5, 1.0]


def test_with_retries_gives_up_after_budget():
    attempts = []

    def always():
        attempts.append(1)
        raise ProviderError("down", retriable=True)

    with pytest.raises(ProviderError):
        with_retries(always, sleeper=lambda _: None)
    assert len(attempts) == 3  # 1 call + 2 retries


def test_with_retries_nonretriable_fails_fast():
    attempts = []

    def fatal():
        attempts.append(1)
        raise ProviderError("bad request", retriable=False)

    with pytest.raises(ProviderError):
        with_retries(fatal, sleeper=lambda _: None)
    assert len(attempts) == 1


# --- embedding mock --------------------------------------------------------------

def test_mock_embedding_shape_and_norm():
    p = MockEmbeddingProvider(dimension=32)
    vecs = p.embed(["condom kaise use karen", ""])
    assert len(vecs) == 2 and all(len(v) == 32 for v in vecs)
    norm = sum(v * v for v in vecs[0]) ** 0.5
    assert norm == pytest.approx(1.0)
    assert vecs[1] == [0.0] * 32  # empty text embeds to the zero vector


def test_mock_embedding_order_insensitive():
    p = MockEmbeddingProvider(dimension=32)
    a = p.embed(["condom use karo"])[0]
    b = p.embed(["karo use condom"])[0]
    assert a == b


def test_mock_embedding_deterministic_across_instances():
    a = MockEmbeddingProvider(dimension=32).embed(["safe sex"])[0]
    b = MockEmbeddingProvider(dimension=32).embed(["safe sex"])[0]
    assert a == b


# --- chat mock ------------------------------------------------------------------

def test_mock_chat_echoes_context_passage():
    p = MockChatProvider()
    result = p.complete([
        {"role": "system", "content": "Answer from context."},
        {"role": "user", "content": "[ctx:rec-7] Condom latex ka banta hai.\nQ: kya?"},
    ], temperature=0.2, max_tokens=100)
    assert result.finish_reason == "stop"
    assert "rec-7" in result.text
    assert "Condom latex ka banta hai." in result.text
    assert result.usage["completion_tokens"] > 0
    assert p.calls == 1


def test_mock_chat_without_context():
    p = MockChatProvider()
    result = p.complete([{"role": "user", "content": "koi context nahin"}],
                        temperature=0.2, max_tokens=100)
    assert "health educator" in result.text
    assert isinstance(result, ChatResult)


# --- asr mock -------------------------------------------------------------------

def test_mock_asr_registry_and_errors(tmp_path):
    p = MockAsrProvider({"mock-audio://one": "condom kya hai"})
    assert p.transcribe("mock-audio://one", "hi") == ("condom kya hai", 1.0)
    with pytest.raises(ProviderError):
        p.transcribe("mock-audio://missing", "hi")
    p.register("mock-audio://empty", "   ")
    with pytest.raises(ProviderError):
        p.transcribe("mock-audio://empty", "hi")

    f = tmp_path / "asr.json"
    f.write_text(json.dumps({"mock-audio://two": "doosra sawal"}), encoding="utf-8")
    assert MockAsrProvider.from_file(f).transcribe("mock-audio://two", "hi")[0] == \
           "doosra sawal"


# --- mt and tts mocks --------------------------------------------------------------

def test_mock_mt_marks_direction():
    assert MockMtProvider().translate("hello", "en", "hi") == "⟪en→hi⟫hello"


def test_mock_tts_stable_uri():
    p = MockTtsProvider()
    a = p.synthesize("namaste", "hi")
    b = p.synthesize("namaste", "hi")
    assert a == b and a.startswith("mock-tts://")
    assert p.synthesize("namaste", "en") != a  # lang changes the uri


# --- judges ----------------------------------------------------------------------

def test_mock_judge_threshold():
    j = MockJudgeProvider(threshold=0.5)
    ctx = ["condom latex ka banta hai"]
    assert j.assess("rocket antriksh mission", ctx) is True
    assert j.assess("condom latex ka", ctx) is False
    assert j.assess("", ctx) is False  # nothing asserted, nothing flagged


def test_scripted_judge_replays_then_exhausts():
    j = ScriptedJudgeProvider([True, False])
    assert j.assess("x", []) is True
    assert j.assess("x", []) is False
    with pytest.raises(ProviderError):
        j.assess("x", [])


def test_chat_judge_parses_yes_no():
    class YesChat:
        provider_id = "stub"

        def complete(self, messages, temperature, max_tokens):
            assert "Does the response assert" in messages[0]["content"]
            return ChatResult(text=" Yes, it does.")

    class NoChat:
        provider_id = "stub"

        def complete(self, messages, temperature, max_tokens):
            return ChatResult(text="no")

    assert ChatJudgeProvider(YesChat()).assess("r", ["c"]) is True
    assert ChatJudgeProvider(NoChat()).assess("r", ["c"]) is False
