"""Extraction schema: three ontologies of typed attribute slots.

The schema file mirrors the reference table column-for-column (id, name,
description, data type, example) and drives both document filtering and
knowledge extraction.
"""
from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterator


class SchemaError(ValueError):
    pass


class SchemaParseError(SchemaError):
    pass


class SchemaInvariantError(SchemaError):
    pass


class ValueParseError(ValueError):
    """A raw string does not satisfy its sub-ontology's data type."""


class DataTypeTag(enum.Enum):
    FLOAT_VALUE = "float"
    TEXT = "string"
    PATTERNED_TEXT = "patterned_string"


@dataclass(frozen=True)
class Quantity:
    magnitude: float
    unit: str


@dataclass(frozen=True)
class TypedValue:
    tag: DataTypeTag
    raw: str
    quantities: tuple[Quantity, ...] = ()
    text: str = ""
    tokens: tuple[str, ...] = ()

    def key(self) -> str:
        """Canonical identity used when merging relations."""
        if self.tag is DataTypeTag.FLOAT_VALUE:
            parts = [f"{q.magnitude!r} {q.unit}" for q in self.quantities]
            return "float:" + ";".join(parts)
        if self.tag is DataTypeTag.TEXT:
            return "string:" + self.text
        return "patterned:" + "/".join(self.tokens)


@dataclass(frozen=True)
class SubOntologySpec:
    id: str
    name: str
    description: str
    data_type: DataTypeTag
    example: str


@dataclass(frozen=True)
class OntologySchema:
    ontologies: tuple[tuple[str, tuple[SubOntologySpec, ...]], ...]

    def subontology(self, subontology_id: str) -> SubOntologySpec:
        for _, subs in self.ontologies:
            for sub in subs:
                if sub.id == subontology_id:
                    return sub
        raise KeyError(subontology_id)

    def subontology_ids(self) -> list[str]:
        return [sub.id for _, subs in self.ontologies for sub in subs]


def bundled_schema_path() -> Path:
    return Path(str(resources.files("litkg.data") / "schema.json"))


def load_schema(path: str | Path | None = None) -> OntologySchema:
    """Load and validate a schema file; None loads the bundled reference schema."""
    if path is None:
        path = bundled_schema_path()
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"schema file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc

    if not isinstance(data, dict) or not isinstance(data.get("ontologies"), list):
        raise SchemaParseError(f"{path}: expected a top-level object with an 'ontologies' array")

    seen_ontologies: set[str] = set()
    seen_ids: set[str] = set()
    ontologies: list[tuple[str, tuple[SubOntologySpec, ...]]] = []
    for i, onto in enumerate(data["ontologies"]):
        if not isinstance(onto, dict):
            raise SchemaParseError(f"{path}: ontologies[{i}] is not an object")
        name = onto.get("name")
        if not name or not isinstance(name, str):
            raise SchemaParseError(f"{path}: ontologies[{i}] has no name")
        if name in seen_ontologies:
            raise SchemaInvariantError(f"{path}: duplicate ontology name {name!r}")
        seen_ontologies.add(name)
        subs: list[SubOntologySpec] = []
        for j, raw in enumerate(onto.get("subontologies", [])):
            where = f"{path}: ontologies[{i}].subontologies[{j}]"
            if not isinstance(raw, dict):
                raise SchemaParseError(f"{where} is not an object")
            try:
                tag = DataTypeTag(raw.get("data_type"))
            except ValueError:
                raise SchemaParseError(
                    f"{where}: unknown data_type {raw.get('data_type')!r}"
                ) from None
            sub = SubOntologySpec(
                id=str(raw.get("id") or ""),
                name=str(raw.get("name") or ""),
                description=str(raw.get("description") or ""),
                data_type=tag,
                example=str(raw.get("example") or ""),
            )
            if not sub.id:
                raise SchemaParseError(f"{where}: missing id")
            if not sub.name or not sub.description:
                raise SchemaInvariantError(f"{where}: name and description must be non-empty")
            if sub.id in seen_ids:
                raise SchemaInvariantError(f"{path}: duplicate sub-ontology id {sub.id!r}")
            seen_ids.add(sub.id)
            subs.append(sub)
        ontologies.append((name, tuple(subs)))
    return OntologySchema(tuple(ontologies))


def iter_subontologies(schema: OntologySchema) -> Iterator[tuple[str, SubOntologySpec]]:
    """Yield (ontology name, spec) pairs in declaration order."""
    for name, subs in schema.ontologies:
        for sub in subs:
            yield name, sub


_NUMBER_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(.*)$")


def validate_value(value: str, tag: DataTypeTag) -> TypedValue:
    """Parse a raw extracted string according to its data-type tag.

    Float values may be compound ("5000 rpm, 100µl"): each comma-separated
    segment is a magnitude with an optional unit suffix kept verbatim.
    Patterned strings are layer stacks: non-empty tokens joined by "/".
    """
    if tag is DataTypeTag.FLOAT_VALUE:
        quantities: list[Quantity] = []
        for segment in value.split(","):
            segment = segment.strip()
            match = _NUMBER_RE.match(segment)
            if not match:
                raise ValueParseError(f"numeric-parse-failure: {segment!r} in {value!r}")
            quantities.append(Quantity(float(match.group(1)), match.group(2).strip()))
        if not quantities:
            raise ValueParseError(f"numeric-parse-failure: empty value")
        return TypedValue(tag, raw=value, quantities=tuple(quantities))
    if tag is DataTypeTag.PATTERNED_TEXT:
        tokens = tuple(value.strip().split("/"))
        if len(tokens) < 2 or any(not t for t in tokens):
            raise ValueParseError(f"pattern-mismatch: {value!r} is not token(\"/\"token)+")
        return TypedValue(tag, raw=value, tokens=tokens)
    return TypedValue(tag, raw=value, text=value.strip())
