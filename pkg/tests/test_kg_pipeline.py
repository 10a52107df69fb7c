import random

import pytest

from litkg.kg_pipeline import (
    CanonicalTriple,
    KnowledgeCandidate,
    dedupe_relations,
    disambiguate_entities,
    load_relation_aliases,
    merge_triples,
    normalize_mention,
)
from litkg.corpus import Corpus, Document, Section
from litkg.llm_gateway import LlmGateway
from litkg.schema import DataTypeTag, validate_value

from conftest import load_golden_json


# ------------------------------------------------------- replay fixtures

def test_filter_matches_golden(fixture_extraction):
    filtered, _ = fixture_extraction
    golden = load_golden_json("filtered.json")
    assert {k: list(v) for k, v in filtered.assignments.items()} == golden
    assert len(filtered.verdicts) == 130


def test_filter_subset_law_on_fixture(fixture_extraction, corpus, schema):
    filtered, _ = fixture_extraction
    assert set(filtered.assignments) == set(schema.subontology_ids())
    for doc_ids in filtered.assignments.values():
        assert set(doc_ids) <= set(corpus.docs)
        assert list(doc_ids) == sorted(doc_ids)


def test_extraction_counts_on_fixture(fixture_extraction):
    filtered, extraction = fixture_extraction
    routed_pairs = sum(len(v) for v in filtered.assignments.values())
    assert routed_pairs == 33
    assert extraction.completion_count == routed_pairs
    assert len(extraction.candidates) == 33


def test_extraction_quarantine_reasons(fixture_extraction):
    _, extraction = fixture_extraction
    by_pair = {(q.doc_id, q.subontology_id): q for q in extraction.quarantined}
    assert set(by_pair) == {
        ("p07", "annealing_parameter"),
        ("p04", "fill_factor_value"),
    }
    assert by_pair[("p07", "annealing_parameter")].reason == "unparseable-completion"
    assert by_pair[("p04", "fill_factor_value")].reason.startswith("type-validation-failure")
    assert by_pair[("p04", "fill_factor_value")].raw_text  # original reply retained


# ------------------------------------------------------- normalization

@pytest.mark.parametrize(
    "raw,expected",
    [
        ("SnO2", "sno2"),
        ("SnO₂", "sno2"),  # subscript two folds to the digit
        ("  Tin   Oxide ", "tin oxide"),
        ("PEDOT:PSS", "pedot:pss"),
        ("Å resolution", "å resolution"),  # angstrom sign folds to a-ring
        ("", ""),
    ],
)
def test_normalize_mention(raw, expected):
    assert normalize_mention(raw) == expected


def _cand(subject, label="rel", value="1.0", so="fill_factor_value",
          doc="d1", ontology="performance", tag=DataTypeTag.FLOAT_VALUE):
    return KnowledgeCandidate(
        subject_mention=subject,
        relation_label=label,
        object_value=value,
        subontology_id=so,
        doc_id=doc,
        ontology=ontology,
        data_type=tag,
    )


def _text_cand(subject, value, label="rel", so="method", doc="d1",
               ontology="fabrication"):
    return _cand(subject, label=label, value=value, so=so, doc=doc,
                 ontology=ontology, tag=DataTypeTag.TEXT)


def test_disambiguation_merges_case_and_whitespace():
    resolution = disambiguate_entities([
        _cand("Tin Oxide"),
        _cand("tin   oxide"),
        _cand("TIN OXIDE "),
    ])
    assert set(resolution.clusters) == {"tin oxide"}
    assert resolution.clusters["tin oxide"] == ("TIN OXIDE", "Tin Oxide", "tin   oxide")
    assert resolution.mapping["Tin Oxide"] == "tin oxide"


def test_parenthetical_alias_links_transitively():
    resolution = disambiguate_entities([
        _cand("tin oxide (SnO2)"),
        _cand("SnO2 (stannic oxide)"),
        _cand("stannic oxide"),
    ])
    # All five forms collapse into one cluster, canonical = smallest norm.
    canonicals = {resolution.mapping[m] for m in (
        "tin oxide (SnO2)", "tin oxide", "SnO2", "stannic oxide",
    )}
    assert canonicals == {"sno2"}


def test_canonical_is_smallest_normalized_member():
    resolution = disambiguate_entities([
        _cand("Zeta Phase (alpha phase)"),
    ])
    assert set(resolution.clusters) == {"alpha phase"}


def test_first_sighting_keeps_first_occurrence_across_merge():
    resolution = disambiguate_entities([
        _text_cand("CuO", "thermal evaporation", so="method", ontology="fabrication"),
        _cand("cuo", so="fill_factor_value", ontology="performance", doc="d2"),
    ])
    assert resolution.first_sighting["cuo"] == ("fabrication", "method")
    assert resolution.object_derived == frozenset({"thermal evaporation"})


def test_object_mentions_only_cluster_for_text_types():
    resolution = disambiguate_entities([
        _cand("cell", value="0.82"),  # float object: no object entity
        _text_cand("film", "spin coating"),
    ])
    assert "0.82" not in resolution.mapping
    assert resolution.mapping["spin coating"] == "spin coating"
    assert resolution.object_derived == frozenset({"spin coating"})


def test_bundled_alias_table_round_trip():
    aliases = load_relation_aliases()
    assert aliases["uses_htl"] == "uses_hole_transport_layer"
    assert aliases["achieves_pce"] == "has_power_conversion_efficiency"
    assert aliases["has_annealing_parameter"] == "annealed_at"
    assert "uses_hole_transport_layer" not in aliases  # canonicals are not aliases


def test_alias_table_rejects_ambiguity(tmp_path):
    bad = tmp_path / "aliases.json"
    bad.write_text('{"a": ["x"], "b": ["x"]}', encoding="utf-8")
    with pytest.raises(ValueError):
        load_relation_aliases(bad)


def test_dedupe_unions_provenance_and_rewrites_labels():
    candidates = [
        _text_cand("Device A", "PEDOT:PSS", label="uses_htl", doc="d1"),
        _text_cand("device a", "pedot:pss", label="hole_transport_layer_is", doc="d2"),
        _text_cand("DEVICE A", "PEDOT:PSS", label="uses_hole_transport_layer", doc="d1"),
    ]
    resolution = disambiguate_entities(candidates)
    triples = dedupe_relations(candidates, resolution)
    assert len(triples) == 1
    triple = triples[0]
    assert triple.subject_id == "device a"
    assert triple.label == "uses_hole_transport_layer"
    assert triple.object_entity_id == "pedot:pss"
    assert triple.provenance == ("d1", "d2")


def test_dedupe_keeps_distinct_literal_objects_apart():
    candidates = [
        _cand("cell", value="0.82", doc="d1"),
        _cand("cell", value="0.88", doc="d2"),
        _cand("cell", value="0.82", doc="d3"),
    ]
    resolution = disambiguate_entities(candidates)
    triples = dedupe_relations(candidates, resolution)
    assert len(triples) == 2
    by_raw = {t.object_literal.raw: t for t in triples}
    assert by_raw["0.82"].provenance == ("d1", "d3")
    assert by_raw["0.88"].provenance == ("d2",)


def test_merge_triples_is_idempotent_on_fixture(fixture_extraction):
    _, extraction = fixture_extraction
    resolution = disambiguate_entities(extraction.candidates)
    triples = dedupe_relations(extraction.candidates, resolution)
    assert merge_triples(triples) == triples


# ------------------------------------------------------- property tests

_BASES = [
    "SnO2", "CuO", "PEDOT:PSS", "perovskite film", "Tin Oxide", "silver",
    "PCBM", "DMF", "potassium iodide", "spiro layer", "Carbon electrode",
    "BCP", "nickel oxide", "Cs FA MA", "ITO glass",
]
_LABELS = [
    "uses_htl", "has_method", "fabricated_by", "doped_with", "solvent_is",
    "annealed_at", "improves_stability", "pce_is", "custom_label",
]
_FLOATS = ["0.82", "1.2 V", "25 mA/cm2", "21.2 %", "100, 30", "1e3 h"]
_PATTERNS = ["a/b", "ITO/PEDOT/Ag", "x/y/z/w"]


def _variant(rng: random.Random, name: str) -> str:
    roll = rng.random()
    if roll < 0.2:
        return name.upper()
    if roll < 0.4:
        return name.lower()
    if roll < 0.5:
        return f"  {name}  "
    if roll < 0.6:
        return name.replace(" ", "   ") if " " in name else name
    if roll < 0.75:
        alias = rng.choice(_BASES)
        return f"{name} ({alias})"
    return name


def _random_candidates(rng: random.Random) -> list[KnowledgeCandidate]:
    count = rng.randrange(1, 12)
    out = []
    for _ in range(count):
        tag = rng.choice(list(DataTypeTag))
        if tag is DataTypeTag.TEXT:
            value = _variant(rng, rng.choice(_BASES))
        elif tag is DataTypeTag.FLOAT_VALUE:
            value = rng.choice(_FLOATS)
        else:
            value = rng.choice(_PATTERNS)
        out.append(KnowledgeCandidate(
            subject_mention=_variant(rng, rng.choice(_BASES)),
            relation_label=rng.choice(_LABELS),
            object_value=value,
            subontology_id=rng.choice(["method", "solvent", "fill_factor_value"]),
            doc_id=f"d{rng.randrange(6)}",
            ontology=rng.choice(["fabrication", "parameters", "performance"]),
            data_type=tag,
        ))
    return out


def test_resolution_laws_on_randomized_candidates():
    rng = random.Random(518_000)
    for case in range(520):
        candidates = _random_candidates(rng)
        resolution = disambiguate_entities(candidates)

        # Totality: every mention the dedupe stage will look up is covered.
        for cand in candidates:
            assert cand.subject_mention.strip() in resolution.mapping, case
            if cand.data_type is DataTypeTag.TEXT:
                assert cand.object_value.strip() in resolution.mapping, case

        for canonical, forms in resolution.clusters.items():
            # Fixed point and closure under the recorded surface forms.
            assert resolution.mapping[canonical] == canonical
            normalized = {normalize_mention(f) for f in forms}
            assert canonical == min(normalized), (case, canonical, forms)
            for form in forms:
                assert resolution.mapping[form] == canonical

        # Applying the resolution to its own canonicals changes nothing.
        second = disambiguate_entities([
            _text_cand(canonical, canonical) for canonical in resolution.clusters
        ])
        for canonical in resolution.clusters:
            assert second.mapping[canonical] == canonical


def test_dedupe_laws_on_randomized_candidates():
    rng = random.Random(777_001)
    aliases = load_relation_aliases()
    for case in range(520):
        candidates = _random_candidates(rng)
        resolution = disambiguate_entities(candidates)
        triples = dedupe_relations(candidates, resolution)

        keys = [(t.subject_id, t.label, t.object_key()) for t in triples]
        assert len(keys) == len(set(keys)), case  # no duplicate canonical triples
        assert merge_triples(triples) == triples, case  # idempotent

        for triple in triples:
            assert triple.provenance == tuple(sorted(set(triple.provenance)))
            assert triple.subontology_ids == tuple(sorted(set(triple.subontology_ids)))
            assert triple.label not in aliases  # labels are canonical

        # Provenance is conserved: per key, the union of contributing docs.
        expected: dict[tuple, set] = {}
        for cand in candidates:
            subject = resolution.mapping[cand.subject_mention.strip()]
            label = aliases.get(cand.relation_label, cand.relation_label)
            if cand.data_type is DataTypeTag.TEXT:
                okey = ("entity", resolution.mapping[cand.object_value.strip()])
            else:
                okey = ("literal", validate_value(cand.object_value, cand.data_type).key())
            expected.setdefault((subject, label, okey), set()).add(cand.doc_id)
        got = {(t.subject_id, t.label, t.object_key()): set(t.provenance) for t in triples}
        assert got == expected, case


# --------------------------------------------- randomized filter runs

def _mock_corpus(rng: random.Random, tag: int) -> Corpus:
    docs = {}
    for i in range(rng.randrange(2, 7)):
        doc_id = f"m{tag}-{i}"
        docs[doc_id] = Document(
            doc_id=doc_id,
            title=f"Mock document {tag}-{i}",
            authors=("A. Author",),
            venue="Mock Venue",
            year=2020,
            sections=(Section("Body", f"body text {tag} {i}"),),
            cited_doc_ids=(),
        )
    return Corpus(dict(sorted(docs.items())))


def test_filter_laws_on_randomized_corpora(schema):
    from litkg.kg_pipeline import extract_knowledge, filter_documents

    outer = random.Random(50_50)
    for run in range(50):
        rng = random.Random(outer.randrange(1 << 30))
        corpus = _mock_corpus(rng, run)
        verdict_rng = random.Random(rng.randrange(1 << 30))

        def backend(prompt, request):
            if request.template_id == "filter":
                flag = "yes" if verdict_rng.random() < 0.4 else "no"
                return f'{{"relevant": "{flag}", "reason": "mock"}}'
            return "Not mentioned."

        gateway = LlmGateway(backend=backend)
        filtered = filter_documents(corpus, schema, gateway)
        assert not filtered.unresolved
        assert set(filtered.assignments) == set(schema.subontology_ids()), run
        for doc_ids in filtered.assignments.values():
            assert set(doc_ids) <= set(corpus.docs), run
            assert list(doc_ids) == sorted(doc_ids), run
        assert len(filtered.verdicts) == 13 * len(corpus.docs)

        extraction = extract_knowledge(corpus, schema, filtered.assignments, gateway)
        routed = sum(len(v) for v in filtered.assignments.values())
        assert extraction.completion_count == routed, run
        assert not extraction.candidates
        assert not extraction.quarantined
