"""Builds a ready-to-serve engine from a ServiceConfig: providers picked by
id (mock or HTTP), stores opened (replaying their event logs), rails loaded,
thresholds applied."""
from __future__ import annotations

from .config import ServiceConfig
from .corpus import CorpusStore
from .generation import Generator, PromptTemplate
from .guardrails import Guardrails, RuleSet
from .langbridge import LangBridge, LanguageRoute, RouteMode
from .pipeline import Engine, ModerationStore
from .providers import (HttpAsrProvider, HttpChatProvider,
                        HttpEmbeddingProvider, HttpMtProvider,
                        HttpTtsProvider, MockAsrProvider, MockChatProvider,
                        MockEmbeddingProvider, MockMtProvider,
                        MockTtsProvider)
from .retrieval import Retriever
from .sanitizer import PiiRules, Sanitizer


def build_sanitizer(config: ServiceConfig) -> Sanitizer:
    pii_rules = (PiiRules.from_file(config.pii_rules_path)
                 if config.pii_rules_path else PiiRules.default())
    return Sanitizer(pii_rules)


def build_corpus(config: ServiceConfig,
                 sanitizer: Sanitizer | None = None) -> CorpusStore:
    return CorpusStore(config.store_dir or None,
                       sanitizer=sanitizer or build_sanitizer(config))


def build_retriever(config: ServiceConfig) -> Retriever:
    if config.embedding_provider == "mock":
        embedder = MockEmbeddingProvider(dimension=config.embedding_dimension)
    else:
        embedder = HttpEmbeddingProvider(config.embedding_provider,
                                         config.embedding_url,
                                         config.embedding_dimension)
    return Retriever(provider=embedder, rerank_weight=config.rerank_weight)


def build_rails(config: ServiceConfig, sanitizer: Sanitizer) -> Guardrails:
    ruleset = (RuleSet.from_file(config.rules_path)
               if config.rules_path else RuleSet.default())
    # config owns the tunable thresholds; rule payloads follow it
    ruleset = ruleset.with_thresholds(config.theta_topic, config.grounding_min)
    return Guardrails(ruleset, sanitizer)


def build_generator(config: ServiceConfig) -> Generator:
    if config.llm_provider == "mock":
        chat = MockChatProvider()
    else:
        chat = HttpChatProvider(config.llm_provider, config.llm_url,
                                config.llm_model)
    return Generator(
        chat,
        template=PromptTemplate(language_directive=config.pipeline_lang),
        temperature=config.temperature, max_tokens=config.max_tokens,
        icl_k=config.icl_examples, context_k=config.context_passages,
        permits=config.permits)


def build_bridge(config: ServiceConfig) -> LangBridge:
    if config.asr_provider == "mock":
        asr = (MockAsrProvider.from_file(config.asr_fixtures_path)
               if config.asr_fixtures_path else MockAsrProvider())
    else:
        asr = HttpAsrProvider(config.asr_provider, config.asr_url)
    mt = (MockMtProvider() if config.mt_provider == "mock"
          else HttpMtProvider(config.mt_provider, config.mt_url))
    tts = (MockTtsProvider() if config.tts_provider == "mock"
           else HttpTtsProvider(config.tts_provider, config.tts_url))
    route = LanguageRoute(mode=RouteMode(config.route_mode),
                          source_lang=config.source_lang,
                          pipeline_lang=config.pipeline_lang,
                          output_lang=config.output_lang)
    return LangBridge(route, asr=asr, mt=mt, tts=tts)


def build_engine(config: ServiceConfig) -> Engine:
    sanitizer = build_sanitizer(config)
    return Engine(corpus=build_corpus(config, sanitizer),
                  retriever=build_retriever(config),
                  rails=build_rails(config, sanitizer),
                  generator=build_generator(config),
                  bridge=build_bridge(config),
                  moderation=ModerationStore(config.moderation_dir or None),
                  tau=config.tau, search_k=config.search_k)
