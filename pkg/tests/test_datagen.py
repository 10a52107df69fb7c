import json

import pytest

from litkg.corpus import Corpus, Document, Section
from litkg.datagen import (
    CatalogError,
    DocumentQuarantined,
    ExtractedAnswer,
    McqFormatError,
    OrganizeError,
    OrganizedAnswer,
    ValidatedAnswer,
    _best_section,
    assemble_dataset,
    category_report,
    extract_answers,
    generate_dataset,
    load_catalog,
    load_mcq_items,
    organize_answers,
    validate_answer,
    write_dataset,
)
from litkg.llm_gateway import LlmGateway


def _doc(doc_id="d1", sections=None):
    return Document(
        doc_id=doc_id,
        title=f"Title {doc_id}",
        authors=("A. Author",),
        venue="V",
        year=2020,
        sections=tuple(sections or (Section("Body", "some body text"),)),
        cited_doc_ids=(),
    )


def _gateway(reply_fn):
    return LlmGateway(backend=lambda prompt, request: reply_fn(request))


# ----------------------------------------------------------- catalog

def test_bundled_catalog_shape(catalog):
    assert len(catalog.categories) == 7
    assert len(catalog.questions) == 21
    assert [q.id for q in catalog.questions] == [f"Q{i}" for i in range(1, 22)]
    listing = json.loads(catalog.prompt_listing_json())
    assert list(listing) == list(catalog.categories)
    assert sum(len(v) for v in listing.values()) == 21
    assert listing["Stability Improvements"][0].startswith("Q10: ")


def test_catalog_lookup(catalog):
    assert catalog.question("Q6").category == "Performance Metrics Improvement"
    with pytest.raises(KeyError):
        catalog.question("Q99")


def test_catalog_rejects_bad_files(tmp_path, catalog):
    path = tmp_path / "catalog.json"
    categories = list(catalog.categories)
    records = [
        {"id": q.id, "category": q.category, "text": q.text}
        for q in catalog.questions
    ]

    dup = [dict(r) for r in records]
    dup[3]["id"] = "Q1"
    path.write_text(json.dumps({"categories": categories, "questions": dup}),
                    encoding="utf-8")
    with pytest.raises(CatalogError, match="duplicate"):
        load_catalog(path)

    path.write_text(json.dumps({"categories": categories, "questions": records[:5]}),
                    encoding="utf-8")
    with pytest.raises(CatalogError, match="21 questions"):
        load_catalog(path)

    stray = [dict(r) for r in records]
    stray[0]["category"] = "Nope"
    path.write_text(json.dumps({"categories": categories, "questions": stray}),
                    encoding="utf-8")
    with pytest.raises(CatalogError, match="unknown category"):
        load_catalog(path)


# ----------------------------------------------------- answer extraction

def test_extract_answers_on_fixture(corpus, catalog, replay_gateway):
    answers = extract_answers(corpus.docs["p01"], catalog, replay_gateway)
    assert len(answers) == 21
    substantive = {a.question_id for a in answers if a.substantive}
    assert substantive == {"Q1", "Q3", "Q6", "Q18"}
    assert all(a.doc_id == "p01" for a in answers)


def test_extract_answers_quarantines_undecodable_reply(catalog):
    gateway = _gateway(lambda request: "no json here at all")
    with pytest.raises(DocumentQuarantined) as excinfo:
        extract_answers(_doc(), catalog, gateway)
    assert excinfo.value.doc_id == "d1"
    assert excinfo.value.raw_text == "no json here at all"


def test_extract_answers_ignores_unknown_question_ids(catalog):
    reply = json.dumps({"questions": [
        {"question": "Q1: anything", "answer": "A substantive answer."},
        {"question": "Q99: bogus", "answer": "ignored"},
        {"question": "no id here", "answer": "ignored"},
        "not an object",
    ]})
    gateway = _gateway(lambda request: reply)
    answers = extract_answers(_doc(), catalog, gateway)
    assert len(answers) == 21
    substantive = {a.question_id for a in answers if a.substantive}
    assert substantive == {"Q1"}


def test_extract_answers_treats_not_mentioned_as_empty(catalog):
    reply = json.dumps({"questions": [
        {"question": "Q1: x", "answer": "Not mentioned."},
        {"question": "Q2: x", "answer": "Real content."},
    ]})
    gateway = _gateway(lambda request: reply)
    answers = {a.question_id: a for a in extract_answers(_doc(), catalog, gateway)}
    assert not answers["Q1"].substantive
    assert answers["Q2"].substantive
    assert not answers["Q3"].substantive  # absent from the reply entirely


# --------------------------------------------------------- validation

def test_best_section_prefers_highest_overlap_earliest_tie():
    doc = _doc(sections=[
        Section("One", "alpha beta"),
        Section("Two", "alpha beta gamma"),
        Section("Three", "alpha beta gamma"),
    ])
    assert _best_section(doc, "beta gamma").name == "Two"
    assert _best_section(doc, "alpha").name == "One"
    assert _best_section(doc, "zzz unrelated").name == "One"


def test_validate_answer_routes_to_best_section():
    seen = {}

    def reply(request):
        seen.update(request.bindings)
        return json.dumps({"verified_info": {"fixed_content": "fixed", "reason": "r"}})

    doc = _doc(sections=[
        Section("Abstract", "totally unrelated words"),
        Section("Methods", "films were spin coated at high speed"),
    ])
    answer = ExtractedAnswer("d1", "Q3", "the films were spin coated")
    result = validate_answer(answer, doc, _gateway(reply))
    assert seen["Section_name"] == "Methods"
    assert result.valid
    assert result.fixed_content == "fixed"
    assert result.fix_reason == "r"


def test_validate_answer_marks_parse_failures_invalid():
    answer = ExtractedAnswer("d1", "Q3", "claim text")
    result = validate_answer(answer, _doc(), _gateway(lambda r: "cannot verify"))
    assert not result.valid
    assert result.fixed_content == "claim text"
    assert result.fix_reason == "validator-parse-failure"


def test_validate_answer_rejects_not_mentioned():
    answer = ExtractedAnswer("d1", "Q3", None)
    with pytest.raises(ValueError):
        validate_answer(answer, _doc(), _gateway(lambda r: "unused"))


# -------------------------------------------------------- organization

def _valid(doc_id, question_id, text):
    return ValidatedAnswer(
        ExtractedAnswer(doc_id, question_id, text), True, text, "ok"
    )


def test_organize_answers_merges_and_sorts_sources(catalog):
    def reply(request):
        assert request.bindings["question"] == catalog.question("Q6").text
        return json.dumps({"answer": "merged text"})

    organized = organize_answers(
        "Q6",
        [_valid("p9", "Q6", "b"), _valid("p1", "Q6", "a"), _valid("p9", "Q6", "c")],
        _gateway(reply),
        catalog,
    )
    assert organized.text == "merged text"
    assert organized.source_doc_ids == ("p1", "p9")


def test_organize_answers_preconditions(catalog):
    gateway = _gateway(lambda r: json.dumps({"answer": "x"}))
    with pytest.raises(ValueError):
        organize_answers("Q6", [], gateway, catalog)
    invalid = ValidatedAnswer(ExtractedAnswer("d", "Q6", "t"), False, "t", "bad")
    with pytest.raises(ValueError):
        organize_answers("Q6", [invalid], gateway, catalog)
    with pytest.raises(ValueError):
        organize_answers("Q6", [_valid("d", "Q7", "t")], gateway, catalog)


def test_organize_answers_raises_organize_error(catalog):
    gateway = _gateway(lambda r: json.dumps({"answer": "  "}))
    with pytest.raises(OrganizeError):
        organize_answers("Q6", [_valid("d", "Q6", "t")], gateway, catalog)


# ----------------------------------------------------------- assembly

def test_assemble_dataset_orders_by_catalog(catalog):
    organized = [
        OrganizedAnswer("Q18", "a", ("p1",)),
        OrganizedAnswer("Q2", "b", ("p2",)),
        OrganizedAnswer("Q10", "c", ("p3",)),
    ]
    records = assemble_dataset(catalog, organized)
    assert [r.question_id for r in records] == ["Q2", "Q10", "Q18"]
    assert records[0].category == "Device Structure and Fabrication"
    assert records[0].prompt == catalog.question("Q2").text


def test_assemble_dataset_rejects_unknown_questions(catalog):
    with pytest.raises(CatalogError):
        assemble_dataset(catalog, [OrganizedAnswer("Q99", "x", ())])


def test_assemble_dataset_accepts_mapping(catalog):
    mapping = {"Q1": OrganizedAnswer("Q1", "x", ("p1",))}
    records = assemble_dataset(catalog, mapping)
    assert len(records) == 1


def test_category_report_handles_empty_and_rounds(catalog):
    empty = category_report([], catalog)
    assert empty["total"] == 0
    assert set(empty["percentages"].values()) == {0.0}

    records = assemble_dataset(catalog, [
        OrganizedAnswer("Q1", "x", ()),
        OrganizedAnswer("Q4", "y", ()),
        OrganizedAnswer("Q5", "z", ()),
    ])
    report = category_report(records, catalog)
    assert report["counts"]["Performance Enhancement Strategies"] == 2
    assert report["percentages"]["Device Structure and Fabrication"] == 33.33
    assert abs(sum(report["percentages"].values()) - 100.0) <= 0.1


# ------------------------------------------------------ full pipeline

def test_generate_dataset_matches_golden(corpus, catalog, replay_gateway,
                                         golden_dir, tmp_path):
    result = generate_dataset(corpus, replay_gateway, catalog=catalog)
    assert not result.quarantined
    assert not result.deferred
    assert result.extracted_count == 23
    assert result.validated_count == 22
    out = tmp_path / "dataset.jsonl"
    write_dataset(result.records, out)
    assert out.read_bytes() == (golden_dir / "dataset.jsonl").read_bytes()


def test_generate_dataset_quarantines_bad_documents(catalog):
    docs = {
        "a1": _doc("a1", [Section("Body", "text of the first document")]),
        "a2": _doc("a2", [Section("Body", "text of the second document")]),
    }

    def reply(request):
        if request.template_id == "answer_extraction":
            if "first document" in request.bindings["paper_text"]:
                return "garbage"
            return json.dumps(
                {"questions": [{"question": "Q1: x", "answer": "Answer text."}]}
            )
        if request.template_id == "verification":
            return json.dumps({"verified_info": {"fixed_content": "Answer text.", "reason": ""}})
        return json.dumps({"answer": "organized"})

    result = generate_dataset(Corpus(docs), _gateway(reply), catalog=catalog)
    assert [(q.doc_id, q.raw_text) for q in result.quarantined] == [("a1", "garbage")]
    assert result.extracted_count == 1
    assert len(result.records) == 1
    assert result.records[0].source_doc_ids == ("a2",)


def test_generate_dataset_defers_failed_organization(catalog):
    def reply(request):
        if request.template_id == "answer_extraction":
            return json.dumps({"questions": [
                {"question": "Q1: x", "answer": "First answer."},
                {"question": "Q2: x", "answer": "Second answer."},
            ]})
        if request.template_id == "verification":
            fixed = request.bindings["Extracted_information"]
            return json.dumps({"verified_info": {"fixed_content": fixed, "reason": ""}})
        if "First answer." in request.bindings["answers"]:
            return "not json"
        return json.dumps({"answer": "ok"})

    result = generate_dataset(Corpus({"a1": _doc("a1")}), _gateway(reply), catalog=catalog)
    assert [qid for qid, _ in result.deferred] == ["Q1"]
    assert [r.question_id for r in result.records] == ["Q2"]


def test_generate_dataset_batches_by_question(catalog):
    # 3 docs answering the same question with batch_size=2 -> 2 organize calls.
    docs = {f"b{i}": _doc(f"b{i}") for i in range(3)}
    organize_batches = []

    def reply(request):
        if request.template_id == "answer_extraction":
            return json.dumps({"questions": [
                {"question": "Q1: x", "answer": f"Answer from {request.bindings['paper_text'][:9]}"},
            ]})
        if request.template_id == "verification":
            fixed = request.bindings["Extracted_information"]
            return json.dumps({"verified_info": {"fixed_content": fixed, "reason": ""}})
        organize_batches.append(request.bindings["answers"].count("Answer from"))
        return json.dumps({"answer": f"organized #{len(organize_batches)}"})

    result = generate_dataset(
        Corpus(docs), _gateway(reply), catalog=catalog, batch_size=2
    )
    assert organize_batches == [2, 1]
    assert [r.question_id for r in result.records] == ["Q1", "Q1"]
    assert result.records[0].response == "organized #1"


def test_write_dataset_round_trips(tmp_path, catalog):
    records = assemble_dataset(catalog, [OrganizedAnswer("Q1", "resp", ("p1", "p2"))])
    path = tmp_path / "ds.jsonl"
    write_dataset(records, path)
    loaded = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]
    assert loaded == [{
        "question_id": "Q1",
        "category": "Device Structure and Fabrication",
        "prompt": catalog.question("Q1").text,
        "response": "resp",
        "source_doc_ids": ["p1", "p2"],
    }]


# ----------------------------------------------------------- mcq files

def test_load_mcq_items_fixture(data_dir):
    items = load_mcq_items(data_dir / "mcq_items.jsonl")
    assert len(items) == 20
    assert all(len(item.options) == 4 for item in items)
    assert items[0].item_id == "m01"
    assert items[0].answer_key == "B"


def test_load_mcq_items_validation(tmp_path):
    path = tmp_path / "items.jsonl"

    def write(records):
        path.write_text(
            "\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8"
        )

    good = {"item_id": "x", "stem": "s", "options": ["a", "b"], "answer_key": "A"}
    write([good, {**good, "item_id": "y", "answer_key": "C"}])
    with pytest.raises(McqFormatError, match="does not index"):
        load_mcq_items(path)

    write([good, good])
    with pytest.raises(McqFormatError, match="duplicate"):
        load_mcq_items(path)

    write([{**good, "options": ["only"]}])
    with pytest.raises(McqFormatError, match="at least 2"):
        load_mcq_items(path)

    write([{**good, "item_id": ""}])
    with pytest.raises(McqFormatError, match="missing item_id"):
        load_mcq_items(path)

    write([{**good, "difficulty": "hard"}])
    assert load_mcq_items(path)[0].difficulty == "hard"
