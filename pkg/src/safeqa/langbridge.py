"""Speech and translation plumbing around the text pipeline.

Two routing modes: TRANSLATE runs the engine in a pivot language and
translates on the way in and out; DIRECT keeps the caller's language
end to end. Audio is never stored, only opaque locators move through.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .errors import ProviderError
from .providers import AsrProvider, MtProvider, TtsProvider, with_retries
from .sanitizer import PLACEHOLDERS


class RouteMode(str, Enum):
    TRANSLATE = "translate"
    DIRECT = "direct"


@dataclass(frozen=True)
class AudioRef:
    uri: str
    duration: float = 0.0
    format: str = "opaque"  # wav | mp3 | opaque

    def __post_init__(self):
        if not self.uri:
            raise ValueError("audio uri must be non-empty")


@dataclass(frozen=True)
class TranscriptionResult:
    text: str
    language: str
    confidence: float


@dataclass(frozen=True)
class LanguageRoute:
    mode: RouteMode = RouteMode.DIRECT
    source_lang: str = "hi"
    pipeline_lang: str = "hi"
    output_lang: str = "hi"

    def __post_init__(self):
        if self.mode == RouteMode.DIRECT and self.pipeline_lang != self.source_lang:
            raise ValueError("DIRECT route requires pipeline_lang == source_lang")


def transcribe(audio: AudioRef, lang: str, provider: AsrProvider,
               sleeper=time.sleep) -> TranscriptionResult:
    text, confidence = with_retries(
        lambda: provider.transcribe(audio.uri, lang), sleeper=sleeper)
    return TranscriptionResult(text=text, language=lang, confidence=confidence)


def translate(text: str, src: str, tgt: str, provider: MtProvider,
              sleeper=time.sleep) -> str:
    """Translate, asserting that sanitizer placeholders survive verbatim."""
    if src == tgt:
        raise ProviderError("null translation", retriable=False)
    out = with_retries(lambda: provider.translate(text, src, tgt), sleeper=sleeper)
    for placeholder in PLACEHOLDERS.values():
        if text.count(placeholder) > out.count(placeholder):
            raise ProviderError(
                f"placeholder {placeholder} lost in translation", retriable=False)
    return out


def synthesize(text: str, lang: str, provider: TtsProvider,
               sleeper=time.sleep) -> AudioRef:
    if not text:
        raise ProviderError("cannot synthesize empty text", retriable=False)
    uri = with_retries(lambda: provider.synthesize(text, lang), sleeper=sleeper)
    return AudioRef(uri=uri)


@dataclass
class InboundResult:
    text: str
    source_text: str
    transcription: Optional[TranscriptionResult] = None
    warnings: list[str] = field(default_factory=list)


@dataclass
class OutboundResult:
    text: str
    audio: Optional[AudioRef] = None
    warnings: list[str] = field(default_factory=list)


class LangBridge:
    """Composes ASR, MT, and TTS according to the configured route."""

    def __init__(self, route: LanguageRoute,
                 asr: Optional[AsrProvider] = None,
                 mt: Optional[MtProvider] = None,
                 tts: Optional[TtsProvider] = None,
                 sleeper=time.sleep):
        self.route = route
        self.asr = asr
        self.mt = mt
        self.tts = tts
        self._sleeper = sleeper

    def inbound(self, text: Optional[str] = None,
                audio: Optional[AudioRef] = None) -> InboundResult:
        """Turn caller input (text or audio) into pipeline-language text.

        ASR and inbound MT failures propagate: without a query text there is
        nothing to route. Text-only DIRECT input is the identity.
        """
        if text is None and audio is None:
            raise ValueError("need text or audio input")
        transcription = None
        if text is None:
            if self.asr is None:
                raise ProviderError("no ASR provider configured", retriable=False)
            transcription = transcribe(audio, self.route.source_lang, self.asr,
                                       sleeper=self._sleeper)
            text = transcription.text
        source_text = text
        if (self.route.mode == RouteMode.TRANSLATE
                and self.route.source_lang != self.route.pipeline_lang):
            if self.mt is None:
                raise ProviderError("no MT provider configured", retriable=False)
            text = translate(text, self.route.source_lang,
                             self.route.pipeline_lang, self.mt,
                             sleeper=self._sleeper)
        return InboundResult(text=text, source_text=source_text,
                             transcription=transcription)

    def outbound(self, answer_text: str, want_audio: bool = True) -> OutboundResult:
        """Turn a pipeline-language answer into the caller's language, with
        best-effort audio: TTS or outbound MT failure degrades to text."""
        warnings: list[str] = []
        text = answer_text
        if (self.route.mode == RouteMode.TRANSLATE
                and self.route.pipeline_lang != self.route.output_lang):
            if self.mt is None:
                warnings.append("no MT provider; answer left in pipeline language")
            else:
                try:
                    text = translate(text, self.route.pipeline_lang,
                                     self.route.output_lang, self.mt,
                                     sleeper=self._sleeper)
                except ProviderError as exc:
                    warnings.append(f"outbound translation failed: {exc}")
        audio = None
        if want_audio:
            if self.tts is None:
                warnings.append("no TTS provider; text-only answer")
            else:
                try:
                    audio = synthesize(text, self.route.output_lang, self.tts,
                                       sleeper=self._sleeper)
                except ProviderError as exc:
                    warnings.append(f"speech synthesis failed: {exc}")
        return OutboundResult(text=text, audio=audio, warnings=warnings)
