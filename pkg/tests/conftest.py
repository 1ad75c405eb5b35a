import json

import pytest

from safeqa.bootstrap import build_engine
from safeqa.config import ServiceConfig
from safeqa.synthetic import generate_corpus


@pytest.fixture
def corpus_records():
    return generate_corpus(n_groups=40, seed=7)


@pytest.fixture
def corpus_file(tmp_path, corpus_records):
    path = tmp_path / "corpus.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in corpus_records),
                    encoding="utf-8")
    return path


@pytest.fixture
def engine_factory(tmp_path):
    """Builds engines over shared temp dirs so restart tests can rebuild."""
    def make(**overrides):
        cfg = ServiceConfig(store_dir=str(tmp_path / "store"),
                            moderation_dir=str(tmp_path / "moderation"),
                            **overrides)
        return build_engine(cfg), cfg
    return make


@pytest.fixture
def engine(engine_factory, corpus_file):
    eng, _ = engine_factory()
    eng.corpus.ingest_jsonl(corpus_file)
    return eng
