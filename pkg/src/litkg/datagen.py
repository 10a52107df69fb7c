"""Instruction-data generation: extract answers, validate, organize, assemble.

Three agent roles run in sequence per question over the corpus: a batch
answer extractor, a per-answer validator bound to the best-matching source
section, and an organizer that merges validated paragraphs into the final
response. Only valid answers ever reach the assembled dataset.
"""
from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Corpus, Document, Section, full_text
from .llm_gateway import CompletionRequest, LlmGateway
from .parsing import JsonExtractError, first_json_value, is_not_mentioned

log = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 8

_OPTION_LETTERS = "ABCDEFGH"


class CatalogError(ValueError):
    pass


class OrganizeError(Exception):
    def __init__(self, question_id: str, message: str):
        super().__init__(f"{question_id}: {message}")
        self.question_id = question_id


class DocumentQuarantined(Exception):
    def __init__(self, doc_id: str, raw_text: str):
        super().__init__(f"document {doc_id}: unparseable extraction reply")
        self.doc_id = doc_id
        self.raw_text = raw_text


@dataclass(frozen=True)
class CatalogQuestion:
    id: str
    category: str
    text: str


@dataclass(frozen=True)
class QuestionCatalog:
    categories: tuple[str, ...]
    questions: tuple[CatalogQuestion, ...]

    def question(self, question_id: str) -> CatalogQuestion:
        for q in self.questions:
            if q.id == question_id:
                return q
        raise KeyError(question_id)

    def prompt_listing_json(self) -> str:
        """The category -> numbered-question mapping embedded in the extraction prompt."""
        listing: dict[str, list[str]] = {c: [] for c in self.categories}
        for q in self.questions:
            listing[q.category].append(f"{q.id}: {q.text}")
        return json.dumps(listing, indent=4, ensure_ascii=False)


def bundled_catalog_path() -> Path:
    return Path(str(resources.files("litkg.data") / "question_catalog.json"))


def load_catalog(path: str | Path | None = None) -> QuestionCatalog:
    """Load the 7-category, 21-question catalog (bundled file by default)."""
    if path is None:
        path = bundled_catalog_path()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CatalogError(f"{path}: invalid JSON: {exc.msg}") from exc
    categories = tuple(data.get("categories", ()))
    questions = tuple(
        CatalogQuestion(str(q["id"]), str(q["category"]), str(q["text"]))
        for q in data.get("questions", ())
    )
    if len(categories) != 7:
        raise CatalogError(f"{path}: expected 7 categories, found {len(categories)}")
    if len(questions) != 21:
        raise CatalogError(f"{path}: expected 21 questions, found {len(questions)}")
    if len({q.id for q in questions}) != 21:
        raise CatalogError(f"{path}: duplicate question ids")
    for q in questions:
        if q.category not in categories:
            raise CatalogError(f"{path}: question {q.id} has unknown category {q.category!r}")
    return QuestionCatalog(categories, questions)


@dataclass(frozen=True)
class ExtractedAnswer:
    doc_id: str
    question_id: str
    answer_text: str | None  # None marks "Not mentioned"

    @property
    def substantive(self) -> bool:
        return self.answer_text is not None


_QID_RE = re.compile(r"Q\d+")


def extract_answers(doc: Document, catalog: QuestionCatalog, gateway: LlmGateway) -> list[ExtractedAnswer]:
    """One batch completion per document; total over the catalog.

    Catalog questions missing from the reply come back as NotMentioned; an
    undecodable reply quarantines the whole document.
    """
    request = CompletionRequest(
        template_id="answer_extraction",
        bindings={
            "question_catalog": catalog.prompt_listing_json(),
            "paper_text": full_text(doc),
        },
    )
    reply = gateway.complete(request)
    try:
        value = first_json_value(reply.text)
        if not isinstance(value, Mapping) or not isinstance(value.get("questions"), list):
            raise JsonExtractError("reply lacks a 'questions' array")
    except JsonExtractError:
        raise DocumentQuarantined(doc.doc_id, reply.text) from None

    by_id: dict[str, str | None] = {}
    for item in value["questions"]:
        if not isinstance(item, Mapping):
            continue
        match = _QID_RE.search(str(item.get("question", "")))
        if not match:
            continue
        question_id = match.group(0)
        answer = str(item.get("answer", ""))
        by_id[question_id] = None if is_not_mentioned(answer) else answer
    unknown = set(by_id) - {q.id for q in catalog.questions}
    if unknown:
        log.warning("document %s: ignoring answers for unknown questions %s",
                    doc.doc_id, sorted(unknown))
    return [
        ExtractedAnswer(doc.doc_id, q.id, by_id.get(q.id, None))
        for q in catalog.questions
    ]


@dataclass(frozen=True)
class ValidatedAnswer:
    answer: ExtractedAnswer
    valid: bool
    fixed_content: str
    fix_reason: str


_WORD_RE = re.compile(r"[a-z0-9]+")


def _overlap_tokens(text: str) -> set[str]:
    return set(_WORD_RE.findall(text.casefold()))


def _best_section(doc: Document, answer_text: str) -> Section:
    # Ties go to the earliest section.
    answer_tokens = _overlap_tokens(answer_text)
    best = doc.sections[0]
    best_score = -1
    for sec in doc.sections:
        score = len(answer_tokens & _overlap_tokens(sec.text))
        if score > best_score:
            best, best_score = sec, score
    return best


def validate_answer(answer: ExtractedAnswer, doc: Document, gateway: LlmGateway) -> ValidatedAnswer:
    """Check one substantive answer against its best-overlapping source section."""
    if not answer.substantive:
        raise ValueError("NotMentioned answers skip validation")
    section = _best_section(doc, answer.answer_text)
    request = CompletionRequest(
        template_id="verification",
        bindings={
            "Section_name": section.name,
            "Text_of_the_section": section.text,
            "Extracted_information": answer.answer_text,
        },
    )
    reply = gateway.complete(request)
    try:
        value = first_json_value(reply.text)
        info = value.get("verified_info") if isinstance(value, Mapping) else None
        if not isinstance(info, Mapping) or "fixed_content" not in info:
            raise JsonExtractError("reply lacks verified_info.fixed_content")
    except JsonExtractError:
        return ValidatedAnswer(answer, False, answer.answer_text, "validator-parse-failure")
    return ValidatedAnswer(answer, True, str(info["fixed_content"]), str(info.get("reason", "")))


@dataclass(frozen=True)
class OrganizedAnswer:
    question_id: str
    text: str
    source_doc_ids: tuple[str, ...]


def organize_answers(
    question_id: str,
    validated: Sequence[ValidatedAnswer],
    gateway: LlmGateway,
    catalog: QuestionCatalog | None = None,
) -> OrganizedAnswer:
    """Merge validated paragraphs for one question into a continuous answer."""
    if not validated:
        raise ValueError(f"{question_id}: nothing to organize")
    if any(not v.valid for v in validated):
        raise ValueError(f"{question_id}: only valid answers may be organized")
    if any(v.answer.question_id != question_id for v in validated):
        raise ValueError(f"{question_id}: mixed question ids in one batch")
    catalog = load_catalog() if catalog is None else catalog
    request = CompletionRequest(
        template_id="organization",
        bindings={
            "question": catalog.question(question_id).text,
            "answers": "\n\n".join(v.fixed_content for v in validated),
        },
    )
    reply = gateway.complete(request)
    try:
        value = first_json_value(reply.text)
        text = value.get("answer") if isinstance(value, Mapping) else None
        if not isinstance(text, str) or not text.strip():
            raise JsonExtractError("reply lacks a non-empty 'answer'")
    except JsonExtractError as exc:
        raise OrganizeError(question_id, str(exc)) from None
    sources = tuple(sorted({v.answer.doc_id for v in validated}))
    return OrganizedAnswer(question_id, text, sources)


@dataclass(frozen=True)
class InstructionRecord:
    question_id: str
    category: str
    prompt: str
    response: str
    source_doc_ids: tuple[str, ...]


def assemble_dataset(
    catalog: QuestionCatalog,
    organized: Mapping[str, OrganizedAnswer] | Iterable[OrganizedAnswer],
) -> list[InstructionRecord]:
    """Attach categories and order records by (category, question, batch position)."""
    if isinstance(organized, Mapping):
        items = list(organized.values())
    else:
        items = list(organized)
    known = {q.id for q in catalog.questions}
    unknown = sorted({o.question_id for o in items} - known)
    if unknown:
        raise CatalogError(f"organized answers for unknown questions: {', '.join(unknown)}")

    category_index = {c: i for i, c in enumerate(catalog.categories)}
    question_index = {q.id: i for i, q in enumerate(catalog.questions)}

    def sort_key(pair: tuple[int, OrganizedAnswer]):
        position, org = pair
        question = catalog.question(org.question_id)
        return (category_index[question.category], question_index[org.question_id], position)

    records = []
    for _, org in sorted(enumerate(items), key=sort_key):
        question = catalog.question(org.question_id)
        records.append(
            InstructionRecord(
                question_id=org.question_id,
                category=question.category,
                prompt=question.text,
                response=org.text,
                source_doc_ids=org.source_doc_ids,
            )
        )
    return records


def category_report(
    records: Sequence[InstructionRecord],
    catalog: QuestionCatalog | None = None,
) -> dict:
    """Per-category counts and percentages (two decimals, summing to ~100)."""
    catalog = load_catalog() if catalog is None else catalog
    counts = {c: 0 for c in catalog.categories}
    for record in records:
        counts[record.category] = counts.get(record.category, 0) + 1
    total = len(records)
    percentages = {
        c: (round(100.0 * n / total, 2) if total else 0.0) for c, n in counts.items()
    }
    return {"total": total, "counts": counts, "percentages": percentages}


@dataclass(frozen=True)
class QuarantinedDoc:
    doc_id: str
    raw_text: str


@dataclass(frozen=True)
class DatagenResult:
    records: tuple[InstructionRecord, ...]
    organized: tuple[OrganizedAnswer, ...]
    quarantined: tuple[QuarantinedDoc, ...]
    deferred: tuple[tuple[str, str], ...]
    extracted_count: int
    validated_count: int


def generate_dataset(
    corpus: Corpus,
    gateway: LlmGateway,
    *,
    catalog: QuestionCatalog | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
    max_workers: int = 1,
) -> DatagenResult:
    """Run the full extract -> validate -> organize -> assemble pipeline."""
    catalog = load_catalog() if catalog is None else catalog
    docs = [corpus.docs[doc_id] for doc_id in sorted(corpus.docs)]

    def extract(doc: Document):
        try:
            return extract_answers(doc, catalog, gateway)
        except DocumentQuarantined as exc:
            return QuarantinedDoc(exc.doc_id, exc.raw_text)

    extractions = _map_tasks(docs, extract, max_workers)
    quarantined = [e for e in extractions if isinstance(e, QuarantinedDoc)]
    answers = [
        answer
        for extraction in extractions
        if not isinstance(extraction, QuarantinedDoc)
        for answer in extraction
        if answer.substantive
    ]

    def validate(answer: ExtractedAnswer) -> ValidatedAnswer:
        return validate_answer(answer, corpus.docs[answer.doc_id], gateway)

    validated = _map_tasks(answers, validate, max_workers)

    by_question: dict[str, list[ValidatedAnswer]] = {}
    for v in validated:
        if v.valid:
            by_question.setdefault(v.answer.question_id, []).append(v)

    organized: list[OrganizedAnswer] = []
    deferred: list[tuple[str, str]] = []
    for question in catalog.questions:
        batch_source = by_question.get(question.id, [])
        for start in range(0, len(batch_source), batch_size):
            batch = batch_source[start:start + batch_size]
            try:
                organized.append(organize_answers(question.id, batch, gateway, catalog))
            except OrganizeError as exc:
                deferred.append((question.id, str(exc)))

    records = assemble_dataset(catalog, organized)
    return DatagenResult(
        records=tuple(records),
        organized=tuple(organized),
        quarantined=tuple(quarantined),
        deferred=tuple(deferred),
        extracted_count=len(answers),
        validated_count=sum(1 for v in validated if v.valid),
    )


def _map_tasks(tasks, fn, max_workers):
    if max_workers <= 1:
        return [fn(task) for task in tasks]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, tasks))


def write_dataset(records: Sequence[InstructionRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps({
                "question_id": record.question_id,
                "category": record.category,
                "prompt": record.prompt,
                "response": record.response,
                "source_doc_ids": list(record.source_doc_ids),
            }, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class McqItem:
    item_id: str
    stem: str
    options: tuple[str, ...]
    answer_key: str
    difficulty: str | None = None


class McqFormatError(ValueError):
    pass


def load_mcq_items(path: str | Path) -> list[McqItem]:
    path = Path(path)
    items: list[McqItem] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise McqFormatError(f"{path}:{line_no}: {exc.msg}") from exc
            options = tuple(str(o) for o in record.get("options", ()))
            if len(options) < 2:
                raise McqFormatError(f"{path}:{line_no}: at least 2 options required")
            key = str(record.get("answer_key", ""))
            if key not in _OPTION_LETTERS[: len(options)]:
                raise McqFormatError(
                    f"{path}:{line_no}: answer_key {key!r} does not index an option"
                )
            difficulty = record.get("difficulty")
            item = McqItem(
                str(record.get("item_id", "")),
                str(record.get("stem", "")),
                options,
                key,
                None if difficulty is None else str(difficulty),
            )
            if not item.item_id:
                raise McqFormatError(f"{path}:{line_no}: missing item_id")
            if item.item_id in seen:
                raise McqFormatError(f"{path}:{line_no}: duplicate item_id {item.item_id!r}")
            seen.add(item.item_id)
            items.append(item)
    return items
