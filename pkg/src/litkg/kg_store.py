"""Knowledge-graph persistence and queries.

Flat line-delimited JSON storage (entities, relations, citations, docs)
plus a manifest. Every persisted list is sorted by id so saving the same
graph twice writes byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus, Document
from .kg_pipeline import CanonicalTriple, EntityResolution
from .schema import DataTypeTag, Quantity, TypedValue

FORMAT_VERSION = 1


class GraphError(Exception):
    pass


class GraphIntegrityError(GraphError):
    pass


class UnknownEntityError(GraphError):
    pass


class CorruptGraphError(GraphError):
    pass


class VersionMismatchError(GraphError):
    pass


@dataclass(frozen=True)
class Entity:
    entity_id: str
    surface_forms: tuple[str, ...]
    ontology_path: tuple[str, str]
    typed_value: TypedValue | None = None


@dataclass(frozen=True)
class Relation:
    rel_id: str
    subject: str
    label: str
    object_entity_id: str | None
    object_literal: TypedValue | None
    provenance: tuple[str, ...]
    subontology_ids: tuple[str, ...]

    def object_display(self) -> str:
        if self.object_entity_id is not None:
            return self.object_entity_id
        return self.object_literal.raw


@dataclass(frozen=True)
class CitationEdge:
    from_doc: str
    to_doc: str
    external: bool


@dataclass(frozen=True)
class KnowledgeGraph:
    entities: dict[str, Entity]
    relations: tuple[Relation, ...]
    citation_edges: tuple[CitationEdge, ...]
    doc_registry: dict[str, str]


def bibliography_string(doc: Document) -> str:
    return f"{doc.title}, {'; '.join(doc.authors)}, {doc.venue}, {doc.year}"


def _rel_id(subject: str, label: str, object_key: tuple[str, str]) -> str:
    digest = hashlib.sha256(
        "\x00".join((subject, label, object_key[0], object_key[1])).encode("utf-8")
    )
    return "r" + digest.hexdigest()[:16]


def build(
    triples: Sequence[CanonicalTriple],
    resolution: EntityResolution,
    corpus: Corpus,
) -> KnowledgeGraph:
    """Materialize entities from resolution clusters and insert the triples.

    Entities that only ever appeared as string-typed objects carry a text
    TypedValue; a triple endpoint missing from the resolution is a pipeline
    bug and fails hard.
    """
    entities: dict[str, Entity] = {}
    for canonical in sorted(resolution.clusters):
        typed_value = None
        if canonical in resolution.object_derived:
            typed_value = TypedValue(DataTypeTag.TEXT, raw=canonical, text=canonical)
        entities[canonical] = Entity(
            entity_id=canonical,
            surface_forms=resolution.clusters[canonical],
            ontology_path=resolution.first_sighting[canonical],
            typed_value=typed_value,
        )

    relations: list[Relation] = []
    for triple in sorted(triples, key=lambda t: (t.subject_id, t.label, t.object_key())):
        if triple.subject_id not in entities:
            raise GraphIntegrityError(f"triple subject {triple.subject_id!r} is unresolved")
        if triple.object_entity_id is not None and triple.object_entity_id not in entities:
            raise GraphIntegrityError(f"triple object {triple.object_entity_id!r} is unresolved")
        relations.append(
            Relation(
                rel_id=_rel_id(triple.subject_id, triple.label, triple.object_key()),
                subject=triple.subject_id,
                label=triple.label,
                object_entity_id=triple.object_entity_id,
                object_literal=triple.object_literal,
                provenance=tuple(sorted(triple.provenance)),
                subontology_ids=tuple(sorted(triple.subontology_ids)),
            )
        )

    edges = [
        CitationEdge(doc_id, cited, cited not in corpus.docs)
        for doc_id in sorted(corpus.docs)
        for cited in corpus.docs[doc_id].cited_doc_ids
    ]
    edges.sort(key=lambda e: (e.from_doc, e.to_doc))

    registry = {doc_id: bibliography_string(corpus.docs[doc_id]) for doc_id in sorted(corpus.docs)}
    return KnowledgeGraph(entities, tuple(relations), tuple(edges), registry)


def stats(graph: KnowledgeGraph) -> dict:
    per_ontology: dict[str, int] = {}
    for entity in graph.entities.values():
        per_ontology[entity.ontology_path[0]] = per_ontology.get(entity.ontology_path[0], 0) + 1
    return {
        "entity_count": len(graph.entities),
        "relation_count": len(graph.relations),
        "citation_count": len(graph.citation_edges),
        "per_ontology": dict(sorted(per_ontology.items())),
    }


def validate_graph(graph: KnowledgeGraph) -> None:
    """Full-scan referential integrity check; raises on the first report."""
    problems: list[str] = []
    for rel in graph.relations:
        if rel.subject not in graph.entities:
            problems.append(f"relation {rel.rel_id}: dangling subject {rel.subject!r}")
        if rel.object_entity_id is not None and rel.object_entity_id not in graph.entities:
            problems.append(f"relation {rel.rel_id}: dangling object {rel.object_entity_id!r}")
        if not rel.provenance:
            problems.append(f"relation {rel.rel_id}: empty provenance")
        for doc_id in rel.provenance:
            if doc_id not in graph.doc_registry:
                problems.append(f"relation {rel.rel_id}: provenance doc {doc_id!r} unregistered")
    for edge in graph.citation_edges:
        if edge.from_doc not in graph.doc_registry:
            problems.append(f"citation from unregistered doc {edge.from_doc!r}")
        if not edge.external and edge.to_doc not in graph.doc_registry:
            problems.append(f"citation to {edge.to_doc!r} not flagged external")
    if problems:
        raise GraphIntegrityError("; ".join(problems))


def neighbors(graph: KnowledgeGraph, entity_id: str, direction: str = "both") -> list[Relation]:
    """Relations incident to an entity, ordered by (label, counterpart id)."""
    if entity_id not in graph.entities:
        raise UnknownEntityError(f"no entity {entity_id!r} in graph")
    if direction not in ("out", "in", "both"):
        raise ValueError(f"direction must be out/in/both, got {direction!r}")
    found: dict[str, Relation] = {}
    for rel in graph.relations:
        if direction in ("out", "both") and rel.subject == entity_id:
            found[rel.rel_id] = rel
        if direction in ("in", "both") and rel.object_entity_id == entity_id:
            found[rel.rel_id] = rel

    def counterpart(rel: Relation) -> str:
        return rel.object_display() if rel.subject == entity_id else rel.subject

    return sorted(found.values(), key=lambda r: (r.label, counterpart(r), r.rel_id))


def _typed_value_to_json(value: TypedValue | None):
    if value is None:
        return None
    record = {"tag": value.tag.value, "raw": value.raw}
    if value.tag is DataTypeTag.FLOAT_VALUE:
        record["quantities"] = [{"magnitude": q.magnitude, "unit": q.unit} for q in value.quantities]
    elif value.tag is DataTypeTag.TEXT:
        record["text"] = value.text
    else:
        record["tokens"] = list(value.tokens)
    return record


def _typed_value_from_json(record) -> TypedValue | None:
    if record is None:
        return None
    tag = DataTypeTag(record["tag"])
    if tag is DataTypeTag.FLOAT_VALUE:
        quantities = tuple(Quantity(q["magnitude"], q["unit"]) for q in record["quantities"])
        return TypedValue(tag, raw=record["raw"], quantities=quantities)
    if tag is DataTypeTag.TEXT:
        return TypedValue(tag, raw=record["raw"], text=record["text"])
    return TypedValue(tag, raw=record["raw"], tokens=tuple(record["tokens"]))


def _write_jsonl(path: Path, records: Iterable[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def save(graph: KnowledgeGraph, directory: str | Path, *, created_at: str | None = None) -> None:
    """Persist the graph; omit created_at (the default) for byte-stable output."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_jsonl(
        directory / "entities.jsonl",
        (
            {
                "entity_id": e.entity_id,
                "surface_forms": list(e.surface_forms),
                "ontology": e.ontology_path[0],
                "subontology_id": e.ontology_path[1],
                "typed_value": _typed_value_to_json(e.typed_value),
            }
            for e in (graph.entities[k] for k in sorted(graph.entities))
        ),
    )
    _write_jsonl(
        directory / "relations.jsonl",
        (
            {
                "rel_id": r.rel_id,
                "subject": r.subject,
                "label": r.label,
                "object_entity_id": r.object_entity_id,
                "object_literal": _typed_value_to_json(r.object_literal),
                "provenance": list(r.provenance),
                "subontology_ids": list(r.subontology_ids),
            }
            for r in graph.relations
        ),
    )
    _write_jsonl(
        directory / "citations.jsonl",
        ({"from_doc": e.from_doc, "to_doc": e.to_doc, "external": e.external}
         for e in graph.citation_edges),
    )
    _write_jsonl(
        directory / "docs.jsonl",
        ({"doc_id": doc_id, "bibliography": graph.doc_registry[doc_id]}
         for doc_id in sorted(graph.doc_registry)),
    )
    manifest: dict = {"format_version": FORMAT_VERSION, "counts": stats(graph)}
    if created_at is not None:
        manifest["created_at"] = created_at
    (directory / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        raise CorruptGraphError(f"missing graph file: {path}")
    records = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CorruptGraphError(f"{path}:{line_no}: {exc.msg}") from exc
    return records


def load(directory: str | Path) -> KnowledgeGraph:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise CorruptGraphError(f"missing graph file: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptGraphError(f"{manifest_path}: {exc.msg}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"graph format {version!r}, expected {FORMAT_VERSION}")

    try:
        entities = {
            record["entity_id"]: Entity(
                entity_id=record["entity_id"],
                surface_forms=tuple(record["surface_forms"]),
                ontology_path=(record["ontology"], record["subontology_id"]),
                typed_value=_typed_value_from_json(record["typed_value"]),
            )
            for record in _read_jsonl(directory / "entities.jsonl")
        }
        relations = tuple(
            Relation(
                rel_id=record["rel_id"],
                subject=record["subject"],
                label=record["label"],
                object_entity_id=record["object_entity_id"],
                object_literal=_typed_value_from_json(record["object_literal"]),
                provenance=tuple(record["provenance"]),
                subontology_ids=tuple(record["subontology_ids"]),
            )
            for record in _read_jsonl(directory / "relations.jsonl")
        )
        edges = tuple(
            CitationEdge(record["from_doc"], record["to_doc"], record["external"])
            for record in _read_jsonl(directory / "citations.jsonl")
        )
        registry = {
            record["doc_id"]: record["bibliography"]
            for record in _read_jsonl(directory / "docs.jsonl")
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptGraphError(f"{directory}: malformed graph record: {exc}") from exc
    return KnowledgeGraph(entities, relations, edges, registry)
