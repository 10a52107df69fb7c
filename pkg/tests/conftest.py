from __future__ import annotations

import json
from pathlib import Path

import pytest

from litkg import datagen, kg_pipeline, kg_store
from litkg.corpus import ingest
from litkg.llm_gateway import FixtureStore, LlmGateway
from litkg.schema import load_schema

DATA = Path(__file__).parent / "data"
GOLDEN = DATA / "golden"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture(scope="session")
def corpus():
    result = ingest(DATA / "corpus.jsonl")
    assert not result.line_errors
    return result.corpus


@pytest.fixture(scope="session")
def schema():
    return load_schema()


@pytest.fixture(scope="session")
def catalog():
    return datagen.load_catalog()


@pytest.fixture(scope="session")
def replay_gateway():
    return LlmGateway(fixtures=FixtureStore.open(DATA / "replay.jsonl"))


@pytest.fixture(scope="session")
def fixture_extraction(corpus, schema, replay_gateway):
    filtered = kg_pipeline.filter_documents(corpus, schema, replay_gateway)
    assert not filtered.unresolved
    extraction = kg_pipeline.extract_knowledge(
        corpus, schema, filtered.assignments, replay_gateway
    )
    assert not extraction.unresolved
    return filtered, extraction


@pytest.fixture(scope="session")
def fixture_graph(corpus, fixture_extraction):
    _, extraction = fixture_extraction
    resolution = kg_pipeline.disambiguate_entities(extraction.candidates)
    triples = kg_pipeline.dedupe_relations(extraction.candidates, resolution)
    graph = kg_store.build(triples, resolution, corpus)
    kg_store.validate_graph(graph)
    return graph


def load_golden_json(name: str):
    return json.loads((GOLDEN / name).read_text(encoding="utf-8"))
