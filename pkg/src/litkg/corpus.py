"""Document ingestion: line-delimited JSON records into an immutable corpus."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class CorpusError(ValueError):
    pass


class DuplicateDocIdError(CorpusError):
    pass


@dataclass(frozen=True)
class Section:
    name: str
    text: str


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    authors: tuple[str, ...]
    venue: str
    year: int
    sections: tuple[Section, ...]
    cited_doc_ids: tuple[str, ...]


@dataclass(frozen=True)
class Corpus:
    docs: dict[str, Document]

    def __len__(self) -> int:
        return len(self.docs)


@dataclass(frozen=True)
class IngestResult:
    corpus: Corpus
    doc_count: int
    line_errors: tuple[tuple[int, str], ...]


def _document_from_record(record: dict) -> Document:
    doc_id = record.get("doc_id")
    if not doc_id or not isinstance(doc_id, str):
        raise CorpusError("missing doc_id")
    title = record.get("title")
    if not title or not isinstance(title, str):
        raise CorpusError("missing title")
    sections_raw = record.get("sections")
    if not isinstance(sections_raw, list) or not sections_raw:
        raise CorpusError("at least one section required")
    sections = []
    for sec in sections_raw:
        if not isinstance(sec, dict) or "name" not in sec or "text" not in sec:
            raise CorpusError("section records need 'name' and 'text'")
        sections.append(Section(str(sec["name"]), str(sec["text"])))
    try:
        year = int(record.get("year"))
    except (TypeError, ValueError):
        raise CorpusError(f"bad year {record.get('year')!r}") from None
    authors = tuple(str(a) for a in record.get("authors", []))
    cited = tuple(str(c) for c in record.get("cited_doc_ids", []))
    return Document(
        doc_id=doc_id,
        title=title,
        authors=authors,
        venue=str(record.get("venue", "")),
        year=year,
        sections=tuple(sections),
        cited_doc_ids=cited,
    )


def ingest(path: str | Path) -> IngestResult:
    """Read a corpus file; malformed lines are collected, duplicate ids are fatal."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    docs: dict[str, Document] = {}
    errors: list[tuple[int, str]] = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                doc = _document_from_record(record)
            except (json.JSONDecodeError, CorpusError) as exc:
                errors.append((line_no, str(exc)))
                continue
            if doc.doc_id in docs:
                raise DuplicateDocIdError(f"{path}:{line_no}: duplicate doc_id {doc.doc_id!r}")
            docs[doc.doc_id] = doc
    ordered = {doc_id: docs[doc_id] for doc_id in sorted(docs)}
    return IngestResult(Corpus(ordered), len(ordered), tuple(errors))


def full_text(doc: Document) -> str:
    """Section names and texts concatenated, one blank line between sections."""
    return "\n\n".join(f"{sec.name}\n{sec.text}" for sec in doc.sections)


def serialize_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write docs back out, sorted by id; inverse of ingest up to ordering."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc_id in sorted(corpus.docs):
            doc = corpus.docs[doc_id]
            record = {
                "doc_id": doc.doc_id,
                "title": doc.title,
                "authors": list(doc.authors),
                "venue": doc.venue,
                "year": doc.year,
                "sections": [{"name": s.name, "text": s.text} for s in doc.sections],
                "cited_doc_ids": list(doc.cited_doc_ids),
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
