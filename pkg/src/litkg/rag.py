"""Graph-backed retrieval and cited answer generation.

Retrieval is plain lexical token overlap between the query and the surface
forms stored in the graph; no embeddings, so ranking is reproducible from
the graph files alone. Context lines carry numbered citation markers that
resolve to bibliography entries built from the document registry.
"""
from __future__ import annotations

import logging
import re
import unicodedata
from dataclasses import dataclass
from typing import Mapping, Sequence

from .kg_store import (
    GraphIntegrityError,
    KnowledgeGraph,
    Relation,
    neighbors,
)
from .llm_gateway import CompletionRequest, LlmGateway

log = logging.getLogger(__name__)

DEFAULT_K = 10
DEFAULT_MAX_LINES = 20

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_MARKER_RE = re.compile(r"\[(\d+)\]")


def query_tokens(text: str) -> frozenset[str]:
    return frozenset(_TOKEN_RE.findall(unicodedata.normalize("NFKC", text).casefold()))


@dataclass(frozen=True)
class RetrievalHit:
    kind: str  # "entity" or "relation"
    id: str
    score: int
    provenance_doc_ids: tuple[str, ...]


@dataclass(frozen=True)
class RetrievalIndex:
    graph: KnowledgeGraph
    entity_tokens: Mapping[str, frozenset[str]]
    relation_tokens: Mapping[str, frozenset[str]]
    relations_by_id: Mapping[str, Relation]
    entity_provenance: Mapping[str, tuple[str, ...]]


def index(graph: KnowledgeGraph) -> RetrievalIndex:
    """Tokenize every entity and relation once, up front."""
    entity_tokens: dict[str, frozenset[str]] = {}
    for entity_id, entity in graph.entities.items():
        tokens = set(query_tokens(entity_id))
        for surface in entity.surface_forms:
            tokens |= query_tokens(surface)
        entity_tokens[entity_id] = frozenset(tokens)

    relation_tokens: dict[str, frozenset[str]] = {}
    relations_by_id: dict[str, Relation] = {}
    provenance_sets: dict[str, set[str]] = {}
    for relation in graph.relations:
        tokens = set(query_tokens(relation.label))
        tokens |= entity_tokens.get(relation.subject, frozenset())
        if relation.object_entity_id is not None:
            tokens |= entity_tokens.get(relation.object_entity_id, frozenset())
        else:
            tokens |= query_tokens(relation.object_literal.raw)
        relation_tokens[relation.rel_id] = frozenset(tokens)
        relations_by_id[relation.rel_id] = relation
        provenance_sets.setdefault(relation.subject, set()).update(relation.provenance)
        if relation.object_entity_id is not None:
            provenance_sets.setdefault(relation.object_entity_id, set()).update(
                relation.provenance
            )

    entity_provenance = {
        entity_id: tuple(sorted(provenance_sets.get(entity_id, ())))
        for entity_id in graph.entities
    }
    return RetrievalIndex(graph, entity_tokens, relation_tokens, relations_by_id, entity_provenance)


def retrieve(idx: RetrievalIndex, query: str, k: int = DEFAULT_K) -> list[RetrievalHit]:
    """Top-k overlap hits; ties break toward entities, then by id."""
    if k < 1:
        raise ValueError("k must be at least 1")
    tokens = query_tokens(query)
    hits: list[RetrievalHit] = []
    for entity_id, entity_toks in idx.entity_tokens.items():
        score = len(tokens & entity_toks)
        if score > 0:
            hits.append(RetrievalHit("entity", entity_id, score, idx.entity_provenance[entity_id]))
    for rel_id, rel_toks in idx.relation_tokens.items():
        score = len(tokens & rel_toks)
        if score > 0:
            relation = idx.relations_by_id[rel_id]
            hits.append(RetrievalHit("relation", rel_id, score, relation.provenance))
    hits.sort(key=lambda h: (-h.score, h.kind, h.id))
    return hits[:k]


@dataclass(frozen=True)
class BibliographyEntry:
    number: int
    doc_id: str
    text: str
    external: bool


@dataclass(frozen=True)
class CitedContext:
    context_text: str
    bibliography: tuple[BibliographyEntry, ...]

    @property
    def lines(self) -> tuple[str, ...]:
        return tuple(self.context_text.splitlines()) if self.context_text else ()


def _hit_relations(idx: RetrievalIndex, hits: Sequence[RetrievalHit]) -> list[Relation]:
    ordered: list[Relation] = []
    seen: set[str] = set()
    for hit in hits:
        if hit.kind == "relation":
            expansion = [idx.relations_by_id[hit.id]]
        else:
            expansion = neighbors(idx.graph, hit.id, direction="both")
        for relation in expansion:
            if relation.rel_id not in seen:
                seen.add(relation.rel_id)
                ordered.append(relation)
    return ordered


def assemble_context(
    idx: RetrievalIndex,
    hits: Sequence[RetrievalHit],
    max_lines: int = DEFAULT_MAX_LINES,
) -> CitedContext:
    """Render hit relations as cited lines; entity hits pull in their
    neighborhood. Citation numbers run in order of first appearance."""
    graph = idx.graph
    relations = _hit_relations(idx, hits)[:max_lines]
    numbers: dict[str, int] = {}
    lines: list[str] = []
    for relation in relations:
        markers = []
        for doc_id in sorted(relation.provenance):
            if doc_id not in numbers:
                if doc_id not in graph.doc_registry:
                    raise GraphIntegrityError(
                        f"relation {relation.rel_id} cites unregistered document {doc_id}"
                    )
                numbers[doc_id] = len(numbers) + 1
            markers.append(f"[{numbers[doc_id]}]")
        lines.append(
            f"- {relation.subject} {relation.label} {relation.object_display()} "
            + "".join(markers)
        )
    # doc_registry already holds formatted citation strings.
    bibliography = tuple(
        BibliographyEntry(number, doc_id, graph.doc_registry[doc_id], False)
        for doc_id, number in sorted(numbers.items(), key=lambda kv: kv[1])
    )
    return CitedContext("\n".join(lines), bibliography)


@dataclass(frozen=True)
class RagAnswer:
    query: str
    answer_text: str
    context: CitedContext
    hits: tuple[RetrievalHit, ...]
    flags: tuple[str, ...]


def answer_with_citations(
    idx: RetrievalIndex,
    query: str,
    gateway: LlmGateway,
    *,
    k: int = DEFAULT_K,
    max_lines: int = DEFAULT_MAX_LINES,
) -> RagAnswer:
    """Retrieve, assemble cited context, and generate a grounded answer."""
    hits = tuple(retrieve(idx, query, k))
    context = assemble_context(idx, hits, max_lines)
    if not context.context_text:
        return RagAnswer(
            query,
            "No supporting information was found in the knowledge graph.",
            context,
            hits,
            ("ungrounded",),
        )
    references = "\n".join(f"[{e.number}] {e.text}" for e in context.bibliography)
    request = CompletionRequest(
        template_id="rag_answer",
        bindings={"question": query, "context": context.context_text, "references": references},
    )
    reply = gateway.complete(request)
    answer_text = reply.text.strip()
    flags: list[str] = []
    known = {str(e.number) for e in context.bibliography}
    leaked = sorted(set(_MARKER_RE.findall(answer_text)) - known, key=int)
    if leaked:
        log.warning("answer cites unknown references %s", leaked)
        flags.append("citation-leak")
    return RagAnswer(query, answer_text, context, hits, tuple(flags))


def transcript_dict(answer: RagAnswer) -> dict:
    """JSON-ready transcript of one query round trip."""
    return {
        "query": answer.query,
        "hits": [
            {
                "kind": h.kind,
                "id": h.id,
                "score": h.score,
                "provenance_doc_ids": list(h.provenance_doc_ids),
            }
            for h in answer.hits
        ],
        "context": answer.context.context_text,
        "bibliography": [
            {"number": e.number, "doc_id": e.doc_id, "text": e.text, "external": e.external}
            for e in answer.context.bibliography
        ],
        "answer": answer.answer_text,
        "flags": list(answer.flags),
    }
