import dataclasses
import json

import pytest

from litkg import kg_store
from litkg.kg_store import (
    CorruptGraphError,
    GraphIntegrityError,
    KnowledgeGraph,
    UnknownEntityError,
    VersionMismatchError,
    load,
    neighbors,
    save,
    stats,
    validate_graph,
)

from conftest import load_golden_json

GRAPH_FILES = ("entities.jsonl", "relations.jsonl", "citations.jsonl",
               "docs.jsonl", "manifest.json")


def test_stats_match_golden(fixture_graph):
    assert stats(fixture_graph) == load_golden_json("graph_stats.json")


def test_entities_carry_surface_forms(fixture_graph):
    sno2 = fixture_graph.entities["sno2"]
    assert sno2.surface_forms == ("SnO2", "SnO₂", "tin oxide", "tin oxide (SnO2)")
    assert sno2.ontology_path == ("fabrication", "method")
    dmf = fixture_graph.entities["dimethylformamide"]
    assert "DMF" in dmf.surface_forms
    assert "Dimethylformamide (DMF)" in dmf.surface_forms


def test_merged_relation_provenance(fixture_graph):
    merged = [
        r for r in fixture_graph.relations
        if r.subject == "inverted device" and r.label == "uses_hole_transport_layer"
    ]
    assert len(merged) == 1
    assert merged[0].provenance == ("p01", "p03")
    assert merged[0].object_entity_id == "pedot:pss"


def test_citation_edges(fixture_graph):
    edges = {(e.from_doc, e.to_doc): e.external for e in fixture_graph.citation_edges}
    assert len(edges) == 10
    assert edges[("p02", "p01")] is False
    assert edges[("p05", "doi:10.1000/ext.2019")] is True


def test_neighbors_ordering_and_direction(fixture_graph):
    both = neighbors(fixture_graph, "cuo")
    assert [r.label for r in both] == [
        "boosts_power_conversion_efficiency",
        "doped_with",
        "fabricated_by",
        "fabricated_by",
        "improves_moisture_stability",
        "improves_thermal_stability",
    ]
    outgoing = neighbors(fixture_graph, "cuo", direction="out")
    assert all(r.subject == "cuo" for r in outgoing)
    incoming = neighbors(fixture_graph, "cuo", direction="in")
    assert [r.label for r in incoming] == ["doped_with"]
    with pytest.raises(UnknownEntityError):
        neighbors(fixture_graph, "nope")
    with pytest.raises(ValueError):
        neighbors(fixture_graph, "cuo", direction="sideways")


def test_save_load_round_trip(fixture_graph, tmp_path):
    target = tmp_path / "graph"
    save(fixture_graph, target)
    for name in GRAPH_FILES:
        assert (target / name).exists()
    reloaded = load(target)
    assert reloaded.entities == fixture_graph.entities
    assert reloaded.relations == fixture_graph.relations
    assert reloaded.citation_edges == fixture_graph.citation_edges
    assert reloaded.doc_registry == fixture_graph.doc_registry
    validate_graph(reloaded)


def test_double_save_is_byte_identical(fixture_graph, tmp_path):
    first = tmp_path / "first"
    second = tmp_path / "second"
    save(fixture_graph, first)
    save(load(first), second)
    for name in GRAPH_FILES:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_manifest_omits_created_at_by_default(fixture_graph, tmp_path):
    target = tmp_path / "graph"
    save(fixture_graph, target)
    manifest = json.loads((target / "manifest.json").read_text(encoding="utf-8"))
    assert "created_at" not in manifest
    assert manifest["counts"] == stats(fixture_graph)

    save(fixture_graph, target, created_at="2026-01-01T00:00:00Z")
    manifest = json.loads((target / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["created_at"] == "2026-01-01T00:00:00Z"


def test_validator_reports_dangling_references(fixture_graph):
    bad_relation = dataclasses.replace(fixture_graph.relations[0], subject="ghost")
    broken = KnowledgeGraph(
        entities=fixture_graph.entities,
        relations=fixture_graph.relations + (bad_relation,),
        citation_edges=fixture_graph.citation_edges,
        doc_registry=fixture_graph.doc_registry,
    )
    with pytest.raises(GraphIntegrityError, match="dangling subject"):
        validate_graph(broken)


def test_validator_reports_unflagged_external_citation(fixture_graph):
    bad_edge = kg_store.CitationEdge("p01", "unknown-doc", external=False)
    broken = KnowledgeGraph(
        entities=fixture_graph.entities,
        relations=fixture_graph.relations,
        citation_edges=fixture_graph.citation_edges + (bad_edge,),
        doc_registry=fixture_graph.doc_registry,
    )
    with pytest.raises(GraphIntegrityError, match="not flagged external"):
        validate_graph(broken)


def test_load_rejects_version_mismatch(fixture_graph, tmp_path):
    target = tmp_path / "graph"
    save(fixture_graph, target)
    manifest_path = target / "manifest.json"
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    manifest["format_version"] = "0"
    manifest_path.write_text(json.dumps(manifest), encoding="utf-8")
    with pytest.raises(VersionMismatchError):
        load(target)


def test_load_rejects_corrupt_files(fixture_graph, tmp_path):
    target = tmp_path / "graph"
    save(fixture_graph, target)
    (target / "relations.jsonl").write_text("{broken\n", encoding="utf-8")
    with pytest.raises(CorruptGraphError):
        load(target)

    missing = tmp_path / "nowhere"
    with pytest.raises(CorruptGraphError):
        load(missing)


def test_relation_ids_are_stable_digests(fixture_graph):
    for relation in fixture_graph.relations:
        assert relation.rel_id.startswith("r")
        assert len(relation.rel_id) == 17
    assert len({r.rel_id for r in fixture_graph.relations}) == len(fixture_graph.relations)
