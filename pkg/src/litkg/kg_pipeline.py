"""Corpus to knowledge candidates: filtering, extraction, disambiguation, dedup.

Stage order mirrors the pipeline contract: per-(document, sub-ontology)
relevance filtering, prompt-based extraction over the filtered pairs only,
then entity resolution and relation merging as pure post-processing.
"""
from __future__ import annotations

import json
import logging
import re
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence, TypeVar

from .corpus import Corpus, Document, full_text
from .llm_gateway import CompletionRequest, LlmGateway, TransportFailure
from .parsing import JsonExtractError, first_json_value, is_not_mentioned, whitespace_token_count
from .schema import (
    DataTypeTag,
    OntologySchema,
    SubOntologySpec,
    TypedValue,
    ValueParseError,
    iter_subontologies,
    validate_value,
)

log = logging.getLogger(__name__)

DEFAULT_TOKEN_BUDGET = 8000

T = TypeVar("T")
R = TypeVar("R")


def _map_tasks(tasks: Sequence[T], fn: Callable[[T], R], max_workers: int) -> list[R]:
    # Results keep task order regardless of worker count, so concurrency
    # never changes pipeline output.
    if max_workers <= 1:
        return [fn(task) for task in tasks]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, tasks))


@dataclass(frozen=True)
class FilterVerdict:
    doc_id: str
    subontology_id: str
    relevant: bool
    rationale_text: str


@dataclass(frozen=True)
class UnresolvedPair:
    doc_id: str
    subontology_id: str
    error: str


@dataclass(frozen=True)
class FilterResult:
    assignments: dict[str, tuple[str, ...]]
    verdicts: tuple[FilterVerdict, ...]
    unresolved: tuple[UnresolvedPair, ...]


def _parse_filter_reply(text: str) -> tuple[bool, str]:
    value = first_json_value(text)
    if not isinstance(value, Mapping):
        raise JsonExtractError("filter reply is not a JSON object")
    flag = str(value.get("relevant", "")).strip().casefold()
    if flag not in ("yes", "no"):
        raise JsonExtractError(f"filter reply 'relevant' field is {value.get('relevant')!r}")
    return flag == "yes", str(value.get("reason", ""))


def filter_documents(
    corpus: Corpus,
    schema: OntologySchema,
    gateway: LlmGateway,
    *,
    max_workers: int = 1,
) -> FilterResult:
    """Ask, per (document, sub-ontology) pair, whether the document is relevant.

    A pair counts as relevant exactly when the reply JSON carries
    relevant == "yes" (case-insensitive). Gateway failures and undecodable
    replies leave the pair unresolved; the stage keeps going.
    """
    doc_ids = sorted(corpus.docs)
    tasks = [
        (sub, doc_id)
        for _, sub in iter_subontologies(schema)
        for doc_id in doc_ids
    ]

    def run(task: tuple[SubOntologySpec, str]):
        sub, doc_id = task
        request = CompletionRequest(
            template_id="filter",
            bindings={
                "subontology_name": sub.name,
                "subontology_description": sub.description,
                "paper_text": full_text(corpus.docs[doc_id]),
            },
        )
        try:
            reply = gateway.complete(request)
            relevant, reason = _parse_filter_reply(reply.text)
        except (TransportFailure, JsonExtractError) as exc:
            return UnresolvedPair(doc_id, sub.id, str(exc))
        return FilterVerdict(doc_id, sub.id, relevant, reason)

    outcomes = _map_tasks(tasks, run, max_workers)
    assignments: dict[str, list[str]] = {sub.id: [] for _, sub in iter_subontologies(schema)}
    verdicts: list[FilterVerdict] = []
    unresolved: list[UnresolvedPair] = []
    for outcome in outcomes:
        if isinstance(outcome, UnresolvedPair):
            unresolved.append(outcome)
            continue
        verdicts.append(outcome)
        if outcome.relevant:
            assignments[outcome.subontology_id].append(outcome.doc_id)
    return FilterResult(
        assignments={so_id: tuple(sorted(ids)) for so_id, ids in assignments.items()},
        verdicts=tuple(verdicts),
        unresolved=tuple(unresolved),
    )


@dataclass(frozen=True)
class KnowledgeCandidate:
    subject_mention: str
    relation_label: str
    object_value: str
    subontology_id: str
    doc_id: str
    ontology: str
    data_type: DataTypeTag
    span_hint: str | None = None


@dataclass(frozen=True)
class QuarantineEntry:
    doc_id: str
    subontology_id: str
    raw_text: str
    reason: str


@dataclass(frozen=True)
class ExtractionResult:
    candidates: tuple[KnowledgeCandidate, ...]
    quarantined: tuple[QuarantineEntry, ...]
    unresolved: tuple[UnresolvedPair, ...]
    completion_count: int


def _chunks_for(doc: Document, token_budget: int) -> list[str]:
    text = full_text(doc)
    if whitespace_token_count(text) <= token_budget:
        return [text]
    return [f"{sec.name}\n{sec.text}" for sec in doc.sections]


def _parse_extraction_reply(
    text: str, ontology: str, sub: SubOntologySpec, doc: Document
) -> tuple[list[KnowledgeCandidate], list[QuarantineEntry]]:
    if is_not_mentioned(text):
        return [], []
    try:
        value = first_json_value(text)
    except JsonExtractError:
        return [], [QuarantineEntry(doc.doc_id, sub.id, text, "unparseable-completion")]
    items = value if isinstance(value, list) else [value]
    candidates: list[KnowledgeCandidate] = []
    quarantined: list[QuarantineEntry] = []
    for item in items:
        if not isinstance(item, Mapping):
            quarantined.append(
                QuarantineEntry(doc.doc_id, sub.id, json.dumps(item, ensure_ascii=False),
                                "finding-not-an-object")
            )
            continue
        raw_value = item.get("value")
        object_value = "" if raw_value is None else str(raw_value).strip()
        if not object_value:
            quarantined.append(
                QuarantineEntry(doc.doc_id, sub.id, json.dumps(item, ensure_ascii=False),
                                "missing-value")
            )
            continue
        if is_not_mentioned(object_value):
            continue
        try:
            validate_value(object_value, sub.data_type)
        except ValueParseError as exc:
            quarantined.append(
                QuarantineEntry(doc.doc_id, sub.id, json.dumps(item, ensure_ascii=False),
                                f"type-validation-failure: {exc}")
            )
            continue
        subject = str(item.get("subject") or "").strip() or doc.title
        relation = str(item.get("relation") or "").strip() or f"has_{sub.id}"
        candidates.append(
            KnowledgeCandidate(
                subject_mention=subject,
                relation_label=relation,
                object_value=object_value,
                subontology_id=sub.id,
                doc_id=doc.doc_id,
                ontology=ontology,
                data_type=sub.data_type,
            )
        )
    return candidates, quarantined


def extract_knowledge(
    corpus: Corpus,
    schema: OntologySchema,
    filtered: Mapping[str, Iterable[str]],
    gateway: LlmGateway,
    *,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
    max_workers: int = 1,
) -> ExtractionResult:
    """Run one extraction completion per filtered (document, sub-ontology) pair.

    Documents above the token budget are queried section by section and the
    parses concatenated; the completion count then exceeds the pair count,
    which only happens for over-budget documents.
    """
    tasks = [
        (ontology, sub, doc_id)
        for ontology, sub in iter_subontologies(schema)
        for doc_id in sorted(filtered.get(sub.id, ()))
    ]

    def run(task: tuple[str, SubOntologySpec, str]):
        ontology, sub, doc_id = task
        doc = corpus.docs[doc_id]
        candidates: list[KnowledgeCandidate] = []
        quarantined: list[QuarantineEntry] = []
        completions = 0
        for chunk in _chunks_for(doc, token_budget):
            request = CompletionRequest(
                template_id="kg_extraction",
                bindings={
                    "subontology_name": sub.name,
                    "subontology_description": sub.description,
                    "data_type": sub.data_type.value,
                    "example": sub.example,
                    "paper_text": chunk,
                },
            )
            try:
                reply = gateway.complete(request)
            except TransportFailure as exc:
                return [], [], [UnresolvedPair(doc_id, sub.id, str(exc))], completions
            completions += 1
            good, bad = _parse_extraction_reply(reply.text, ontology, sub, doc)
            candidates.extend(good)
            quarantined.extend(bad)
        return candidates, quarantined, [], completions

    outcomes = _map_tasks(tasks, run, max_workers)
    candidates: list[KnowledgeCandidate] = []
    quarantined: list[QuarantineEntry] = []
    unresolved: list[UnresolvedPair] = []
    completion_count = 0
    for good, bad, failed, completions in outcomes:
        candidates.extend(good)
        quarantined.extend(bad)
        unresolved.extend(failed)
        completion_count += completions
    return ExtractionResult(tuple(candidates), tuple(quarantined), tuple(unresolved), completion_count)


_PAREN_ALIAS_RE = re.compile(r"^(?P<base>.+?)\s*\((?P<inner>[^()]+)\)$")


def normalize_mention(mention: str) -> str:
    """Unicode compatibility fold, case fold, whitespace collapse."""
    folded = unicodedata.normalize("NFKC", mention).casefold()
    return " ".join(folded.split())


class _UnionFind:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def add(self, node: str) -> None:
        self.parent.setdefault(node, node)

    def find(self, node: str) -> str:
        root = node
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[node] != root:
            self.parent[node], node = root, self.parent[node]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass(frozen=True)
class EntityResolution:
    mapping: dict[str, str]
    clusters: dict[str, tuple[str, ...]]
    first_sighting: dict[str, tuple[str, str]]
    object_derived: frozenset[str]


def disambiguate_entities(candidates: Sequence[KnowledgeCandidate]) -> EntityResolution:
    """Cluster entity mentions by exact match on normalized forms.

    A parenthesized alias ("tin oxide (SnO2)") links the full mention, the
    base, and the inner alias into one cluster; transitive closure over
    those links merges clusters that share any form. The canonical id is
    the lexicographically smallest normalized form in the cluster.
    """
    uf = _UnionFind()
    # (raw surface form, normalized node, ontology, subontology, object position)
    occurrences: list[tuple[str, str, str, str, bool]] = []
    surfaces: dict[str, set[str]] = {}

    def note(raw: str, ontology: str, so_id: str, is_object: bool) -> None:
        raw = raw.strip()
        norm = normalize_mention(raw)
        if not norm:
            return
        uf.add(norm)
        surfaces.setdefault(norm, set()).add(raw)
        occurrences.append((raw, norm, ontology, so_id, is_object))
        match = _PAREN_ALIAS_RE.match(raw)
        if match:
            base, inner = match.group("base").strip(), match.group("inner").strip()
            for part in (base, inner):
                part_norm = normalize_mention(part)
                if part_norm:
                    uf.add(part_norm)
                    surfaces.setdefault(part_norm, set()).add(part)
                    uf.union(norm, part_norm)

    for cand in candidates:
        note(cand.subject_mention, cand.ontology, cand.subontology_id, False)
        if cand.data_type is DataTypeTag.TEXT:
            note(cand.object_value, cand.ontology, cand.subontology_id, True)

    roots: dict[str, list[str]] = {}
    for node in uf.parent:
        roots.setdefault(uf.find(node), []).append(node)

    canonical_of: dict[str, str] = {}
    clusters: dict[str, tuple[str, ...]] = {}
    for root, members in roots.items():
        canonical = min(members)
        forms: set[str] = set()
        for member in members:
            canonical_of[member] = canonical
            forms.update(surfaces.get(member, ()))
        clusters[canonical] = tuple(sorted(forms))

    mapping: dict[str, str] = {}
    first_sighting: dict[str, tuple[str, str]] = {}
    object_derived: set[str] = set()
    for raw, norm, ontology, so_id, is_object in occurrences:
        canonical = canonical_of[norm]
        mapping[raw] = canonical
        first_sighting.setdefault(canonical, (ontology, so_id))
        if is_object:
            object_derived.add(canonical)
    for norm, canonical in canonical_of.items():
        mapping.setdefault(norm, canonical)
        for form in surfaces.get(norm, ()):
            mapping.setdefault(form, canonical)
        mapping[canonical] = canonical

    return EntityResolution(
        mapping=mapping,
        clusters={c: clusters[c] for c in sorted(clusters)},
        first_sighting=first_sighting,
        object_derived=frozenset(object_derived),
    )


@dataclass(frozen=True)
class CanonicalTriple:
    subject_id: str
    label: str
    object_entity_id: str | None
    object_literal: TypedValue | None
    subontology_ids: tuple[str, ...]
    provenance: tuple[str, ...]

    def object_key(self) -> tuple[str, str]:
        if self.object_entity_id is not None:
            return ("entity", self.object_entity_id)
        return ("literal", self.object_literal.key())


def bundled_alias_path() -> Path:
    return Path(str(resources.files("litkg.data") / "relation_aliases.json"))


def load_relation_aliases(path: str | Path | None = None) -> dict[str, str]:
    """Alias -> canonical label map; aliases may not themselves be canonicals."""
    if path is None:
        path = bundled_alias_path()
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    alias_map: dict[str, str] = {}
    for canonical, aliases in data.items():
        for alias in aliases:
            if alias in data:
                raise ValueError(f"alias table: {alias!r} is both an alias and a canonical label")
            if alias_map.get(alias, canonical) != canonical:
                raise ValueError(f"alias table: {alias!r} maps to two canonical labels")
            alias_map[alias] = canonical
    return alias_map


def merge_triples(triples: Iterable[CanonicalTriple]) -> tuple[CanonicalTriple, ...]:
    merged: dict[tuple, CanonicalTriple] = {}
    for triple in triples:
        key = (triple.subject_id, triple.label, triple.object_key())
        seen = merged.get(key)
        if seen is None:
            merged[key] = triple
        else:
            merged[key] = CanonicalTriple(
                subject_id=seen.subject_id,
                label=seen.label,
                object_entity_id=seen.object_entity_id,
                object_literal=seen.object_literal,
                subontology_ids=tuple(sorted(set(seen.subontology_ids) | set(triple.subontology_ids))),
                provenance=tuple(sorted(set(seen.provenance) | set(triple.provenance))),
            )
    return tuple(merged[key] for key in sorted(merged))


def dedupe_relations(
    candidates: Sequence[KnowledgeCandidate],
    resolution: EntityResolution,
    aliases: Mapping[str, str] | None = None,
) -> tuple[CanonicalTriple, ...]:
    """Rewrite candidates onto canonical ids/labels and merge equal triples.

    Objects of string-typed sub-ontologies resolve to entities; float and
    patterned values stay typed literals. Provenance doc ids union on merge.
    """
    alias_map = load_relation_aliases() if aliases is None else aliases
    rewritten: list[CanonicalTriple] = []
    for cand in candidates:
        subject_id = resolution.mapping.get(cand.subject_mention.strip())
        if subject_id is None:
            raise ValueError(f"mention {cand.subject_mention!r} not covered by the resolution")
        label = alias_map.get(cand.relation_label, cand.relation_label)
        if cand.data_type is DataTypeTag.TEXT:
            object_id = resolution.mapping.get(cand.object_value.strip())
            if object_id is None:
                raise ValueError(f"mention {cand.object_value!r} not covered by the resolution")
            object_literal = None
        else:
            object_id = None
            object_literal = validate_value(cand.object_value, cand.data_type)
        rewritten.append(
            CanonicalTriple(
                subject_id=subject_id,
                label=label,
                object_entity_id=object_id,
                object_literal=object_literal,
                subontology_ids=(cand.subontology_id,),
                provenance=(cand.doc_id,),
            )
        )
    return merge_triples(rewritten)
