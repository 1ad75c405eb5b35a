import pytest

from safeqa.errors import ProviderError
from safeqa.langbridge import (
    AudioRef,
    LangBridge,
    LanguageRoute,
    RouteMode,
    translate,
)
from safeqa.providers import MockAsrProvider, MockMtProvider, MockTtsProvider


def test_audio_ref_requires_uri():
    with pytest.raises(ValueError):
        AudioRef(uri="")


def test_direct_route_validates_langs():
    LanguageRoute(mode=RouteMode.DIRECT, source_lang="hi", pipeline_lang="hi")
    with pytest.raises(ValueError):
        LanguageRoute(mode=RouteMode.DIRECT, source_lang="hi", pipeline_lang="en")


def test_translate_requires_distinct_langs():
    with pytest.raises(ProviderError, match="null translation"):
        translate("text", "hi", "hi", MockMtProvider(), sleeper=lambda _: None)


def test_translate_guards_placeholders():
    class Dropper:
        provider_id = "stub"

        def translate(self, text, src, tgt):
            return text.replace("[PHONE]", "téléphone")

    with pytest.raises(ProviderError, match="placeholder"):
        translate("call [PHONE] now", "en", "fr", Dropper(), sleeper=lambda _: None)
    # surviving placeholders pass
    out = translate("call [PHONE] now", "en", "fr", MockMtProvider(),
                    sleeper=lambda _: None)
    assert "[PHONE]" in out


def test_inbound_direct_text_is_identity():
    bridge = LangBridge(LanguageRoute())
    result = bridge.inbound(text="condom kya hai")
    assert result.text == "condom kya hai"
    assert result.source_text == "condom kya hai"
    assert result.transcription is None


def test_inbound_requires_some_input():
    bridge = LangBridge(LanguageRoute())
    with pytest.raises(ValueError):
        bridge.inbound()


def test_inbound_audio_goes_through_asr():
    asr = MockAsrProvider({"mock-audio://q1": "condom kaise use karen"})
    bridge = LangBridge(LanguageRoute(), asr=asr, sleeper=lambda _: None)
    result = bridge.inbound(audio=AudioRef(uri="mock-audio://q1"))
    assert result.text == "condom kaise use karen"
    assert result.transcription.confidence == 1.0
    assert result.transcription.language == "hi"


def test_inbound_audio_without_asr_fails():
    bridge = LangBridge(LanguageRoute())
    with pytest.raises(ProviderError, match="ASR"):
        bridge.inbound(audio=AudioRef(uri="mock-audio://q1"))


def test_inbound_translate_mode_pivots():
    route = LanguageRoute(mode=RouteMode.TRANSLATE, source_lang="hi",
                          pipeline_lang="en", output_lang="hi")
    bridge = LangBridge(route, mt=MockMtProvider(), sleeper=lambda _: None)
    result = bridge.inbound(text="sawal hai")
    assert result.text == "⟪hi→en⟫sawal hai"
    assert result.source_text == "sawal hai"


def test_inbound_translate_mode_without_mt_fails():
    route = LanguageRoute(mode=RouteMode.TRANSLATE, source_lang="hi",
                          pipeline_lang="en")
    bridge = LangBridge(route)
    with pytest.raises(ProviderError, match="MT"):
        bridge.inbound(text="sawal")


def test_outbound_direct_with_tts():
    bridge = LangBridge(LanguageRoute(), tts=MockTtsProvider(),
                        sleeper=lambda _: None)
    out = bridge.outbound("jawab hai", want_audio=True)
    assert out.text == "jawab hai"
    assert out.audio.uri.startswith("mock-tts://")
    assert out.warnings == []


def test_outbound_text_only_when_no_tts():
    bridge = LangBridge(LanguageRoute())
    out = bridge.outbound("jawab", want_audio=True)
    assert out.audio is None
    assert any("TTS" in w for w in out.warnings)
    silent = bridge.outbound("jawab", want_audio=False)
    assert silent.audio is None and silent.warnings == []


def test_outbound_tts_failure_degrades_to_text():
    class BrokenTts:
        provider_id = "stub"

        def synthesize(self, text, lang):
            raise ProviderError("tts down", retriable=False)

    bridge = LangBridge(LanguageRoute(), tts=BrokenTts(), sleeper=lambda _: None)
    out = bridge.outbound("jawab", want_audio=True)
    assert out.text == "jawab"
    assert out.audio is None
    assert any("synthesis failed" in w for w in out.warnings)


def test_outbound_translate_failure_degrades_to_pipeline_language():
    class BrokenMt:
        provider_id = "stub"

        def translate(self, text, src, tgt):
            raise ProviderError("mt down", retriable=False)

    route = LanguageRoute(mode=RouteMode.TRANSLATE, source_lang="hi",
                          pipeline_lang="en", output_lang="hi")
    bridge = LangBridge(route, mt=BrokenMt(), sleeper=lambda _: None)
    out = bridge.outbound("answer text", want_audio=False)
    assert out.text == "answer text"
    assert any("translation failed" in w for w in out.warnings)


def test_outbound_translate_mode_translates_back():
    route = LanguageRoute(mode=RouteMode.TRANSLATE, source_lang="hi",
                          pipeline_lang="en", output_lang="hi")
    bridge = LangBridge(route, mt=MockMtProvider(), tts=MockTtsProvider(),
                        sleeper=lambda _: None)
    out = bridge.outbound("the answer", want_audio=True)
    assert out.text == "⟪en→hi⟫the answer"
    assert out.audio is not None
