"""litkg command line: stage-by-stage pipeline driver.

Configuration precedence is TOML file < environment < flags. Exit codes are
stable: 0 success, 1 usage, 2 configuration, 3 stage failure. Stage failures
emit a one-line JSON error summary on stderr so callers can parse them.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import corpus as corpus_mod
from . import datagen, evaluate, kg_pipeline, kg_store, rag
from .llm_gateway import (
    FixtureStore,
    LlmGateway,
    http_backend,
    load_templates,
    template_hash,
)
from .schema import DataTypeTag, load_schema

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_STAGE = 3

DEFAULT_MAX_INFLIGHT = 4
DEFAULT_TOKEN_BUDGET = 8000


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems must exit 1, not argparse's 2
        raise UsageError(message)


@dataclass
class PipelineConfig:
    corpus: Path | None
    schema: Path | None
    fixtures: Path | None
    out: Path
    max_inflight: int
    token_budget: int
    batch_size: int
    endpoint: str
    api_key: str
    model: str


def _read_toml(path: Path) -> dict:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc


def _int_option(raw, name: str, default: int) -> int:
    if raw is None:
        return default
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ConfigError(f"{name} must be an integer, got {raw!r}")
    if raw < 1:
        raise ConfigError(f"{name} must be at least 1, got {raw}")
    return raw


def resolve_config(args: argparse.Namespace, env: Mapping[str, str]) -> PipelineConfig:
    file_cfg: dict = {}
    config_path = getattr(args, "config", None)
    if config_path:
        file_cfg = _read_toml(Path(config_path))
    gateway_cfg = file_cfg.get("gateway", {})
    if not isinstance(gateway_cfg, dict):
        raise ConfigError("[gateway] must be a table")

    def pick_path(flag_name: str, key: str) -> Path | None:
        flag = getattr(args, flag_name, None)
        if flag:
            return Path(flag)
        value = file_cfg.get(key)
        return Path(value) if value else None

    max_inflight = getattr(args, "max_inflight", None)
    if max_inflight is None:
        max_inflight = file_cfg.get("max_inflight")
    return PipelineConfig(
        corpus=pick_path("corpus", "corpus"),
        schema=pick_path("schema", "schema"),
        fixtures=pick_path("fixtures", "fixtures"),
        out=pick_path("out", "out") or Path("out"),
        max_inflight=_int_option(max_inflight, "max_inflight", DEFAULT_MAX_INFLIGHT),
        token_budget=_int_option(file_cfg.get("token_budget"), "token_budget", DEFAULT_TOKEN_BUDGET),
        batch_size=_int_option(file_cfg.get("batch_size"), "batch_size", datagen.DEFAULT_BATCH_SIZE),
        endpoint=env.get("LLM_ENDPOINT") or str(gateway_cfg.get("endpoint", "")),
        api_key=env.get("LLM_API_KEY") or str(gateway_cfg.get("api_key", "")),
        model=env.get("LLM_MODEL") or str(gateway_cfg.get("model", "")),
    )


def _load_corpus(cfg: PipelineConfig) -> corpus_mod.Corpus:
    if cfg.corpus is None:
        raise ConfigError("corpus path required (--corpus or 'corpus' in config)")
    if not cfg.corpus.is_file():
        raise ConfigError(f"corpus file not found: {cfg.corpus}")
    result = corpus_mod.ingest(cfg.corpus)
    for line_no, message in result.line_errors:
        log.warning("corpus line %d skipped: %s", line_no, message)
    return result.corpus


def _load_schema(cfg: PipelineConfig):
    if cfg.schema is not None and not cfg.schema.is_file():
        raise ConfigError(f"schema file not found: {cfg.schema}")
    return load_schema(cfg.schema)


def build_gateway(cfg: PipelineConfig) -> LlmGateway:
    """Fixture replay when fixtures are configured; live HTTP otherwise."""
    store = None
    if cfg.fixtures is not None:
        if not cfg.fixtures.is_file():
            raise ConfigError(f"fixture file not found: {cfg.fixtures}")
        store = FixtureStore.open(cfg.fixtures)
    backend = None
    if cfg.endpoint:
        backend = http_backend(cfg.endpoint, api_key=cfg.api_key, model=cfg.model)
    if store is None and backend is None:
        raise ConfigError(
            "no completion source: set --fixtures, or LLM_ENDPOINT for live calls"
        )
    return LlmGateway(fixtures=store, backend=backend, max_inflight=cfg.max_inflight)


def _write_json(path: Path, payload) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _print_summary(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))


def _out_dir(cfg: PipelineConfig) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg.out


def _read_text_map(path: Path, label: str) -> dict[str, str]:
    """Load {item_id, text} JSONL keyed by item_id."""
    if not path.is_file():
        raise ConfigError(f"{label} file not found: {path}")
    out: dict[str, str] = {}
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            item_id = str(record["item_id"])
            if item_id in out:
                raise ValueError(f"{path}:{line_no}: duplicate item_id {item_id!r}")
            out[item_id] = str(record["text"])
    return out


def cmd_ingest(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    corpus = _load_corpus(cfg)
    out = _out_dir(cfg)
    corpus_mod.serialize_corpus(corpus, out / "corpus.jsonl")
    _print_summary({"documents": len(corpus), "output": str(out / "corpus.jsonl")})
    return EXIT_OK


def cmd_filter(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    corpus = _load_corpus(cfg)
    schema = _load_schema(cfg)
    gateway = build_gateway(cfg)
    result = kg_pipeline.filter_documents(corpus, schema, gateway, max_workers=cfg.max_inflight)
    out = _out_dir(cfg)
    _write_json(out / "filtered.json", {k: list(v) for k, v in result.assignments.items()})
    _write_json(out / "filter_report.json", {
        "verdicts": len(result.verdicts),
        "relevant_pairs": sum(len(v) for v in result.assignments.values()),
        "unresolved": [
            {"doc_id": u.doc_id, "subontology_id": u.subontology_id, "error": u.error}
            for u in result.unresolved
        ],
    })
    _print_summary({
        "pairs": len(result.verdicts) + len(result.unresolved),
        "relevant": sum(len(v) for v in result.assignments.values()),
        "unresolved": len(result.unresolved),
    })
    return EXIT_OK


def cmd_extract(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    corpus = _load_corpus(cfg)
    schema = _load_schema(cfg)
    gateway = build_gateway(cfg)
    out = _out_dir(cfg)
    filtered_path = out / "filtered.json"
    if not filtered_path.is_file():
        raise ConfigError(f"missing {filtered_path}; run the filter stage first")
    filtered = {
        key: tuple(value)
        for key, value in json.loads(filtered_path.read_text(encoding="utf-8")).items()
    }
    result = kg_pipeline.extract_knowledge(
        corpus, schema, filtered, gateway,
        token_budget=cfg.token_budget, max_workers=cfg.max_inflight,
    )
    with (out / "candidates.jsonl").open("w", encoding="utf-8") as fh:
        for c in result.candidates:
            fh.write(json.dumps({
                "subject_mention": c.subject_mention,
                "relation_label": c.relation_label,
                "object_value": c.object_value,
                "subontology_id": c.subontology_id,
                "doc_id": c.doc_id,
                "ontology": c.ontology,
                "data_type": c.data_type.value,
                "span_hint": c.span_hint,
            }, ensure_ascii=False) + "\n")
    with (out / "quarantine.jsonl").open("w", encoding="utf-8") as fh:
        for q in result.quarantined:
            fh.write(json.dumps({
                "doc_id": q.doc_id,
                "subontology_id": q.subontology_id,
                "raw_text": q.raw_text,
                "reason": q.reason,
            }, ensure_ascii=False) + "\n")
    _write_json(out / "extract_report.json", {
        "completions": result.completion_count,
        "unresolved": [
            {"doc_id": u.doc_id, "subontology_id": u.subontology_id, "error": u.error}
            for u in result.unresolved
        ],
    })
    _print_summary({
        "completions": result.completion_count,
        "candidates": len(result.candidates),
        "quarantined": len(result.quarantined),
        "unresolved": len(result.unresolved),
    })
    return EXIT_OK


def cmd_build_kg(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    corpus = _load_corpus(cfg)
    out = _out_dir(cfg)
    candidates_path = out / "candidates.jsonl"
    if not candidates_path.is_file():
        raise ConfigError(f"missing {candidates_path}; run the extract stage first")
    candidates = []
    with candidates_path.open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            candidates.append(kg_pipeline.KnowledgeCandidate(
                subject_mention=record["subject_mention"],
                relation_label=record["relation_label"],
                object_value=record["object_value"],
                subontology_id=record["subontology_id"],
                doc_id=record["doc_id"],
                ontology=record["ontology"],
                data_type=DataTypeTag(record["data_type"]),
                span_hint=record.get("span_hint"),
            ))
    resolution = kg_pipeline.disambiguate_entities(candidates)
    triples = kg_pipeline.dedupe_relations(candidates, resolution)
    graph = kg_store.build(triples, resolution, corpus)
    kg_store.validate_graph(graph)
    kg_store.save(graph, out / "graph")
    _print_summary(kg_store.stats(graph))
    return EXIT_OK


def cmd_gen_dataset(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    corpus = _load_corpus(cfg)
    gateway = build_gateway(cfg)
    catalog = datagen.load_catalog()
    result = datagen.generate_dataset(
        corpus, gateway,
        catalog=catalog, batch_size=cfg.batch_size, max_workers=cfg.max_inflight,
    )
    out = _out_dir(cfg)
    datagen.write_dataset(result.records, out / "dataset.jsonl")
    _write_json(out / "category_report.json", datagen.category_report(result.records, catalog))
    with (out / "datagen_quarantine.jsonl").open("w", encoding="utf-8") as fh:
        for q in result.quarantined:
            fh.write(json.dumps(
                {"doc_id": q.doc_id, "raw_text": q.raw_text}, ensure_ascii=False
            ) + "\n")
    _write_json(out / "deferred.json", [
        {"question_id": qid, "error": err} for qid, err in result.deferred
    ])
    _print_summary({
        "records": len(result.records),
        "extracted_answers": result.extracted_count,
        "validated_answers": result.validated_count,
        "quarantined_docs": len(result.quarantined),
        "deferred_batches": len(result.deferred),
    })
    return EXIT_OK


def cmd_eval_qa(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    predictions = _read_text_map(Path(args.predictions), "predictions")
    references = _read_text_map(Path(args.references), "references")
    stray = sorted(set(predictions) - set(references))
    if stray:
        raise ValueError(f"predictions without references: {', '.join(stray)}")

    item_ids = sorted(references)
    rouge_scores = [
        evaluate.rouge_l_text(predictions.get(item_id, ""), references[item_id])
        for item_id in item_ids
    ]

    judge_scores: list = []
    judge_failures: list = []
    metadata: dict = {"items": len(item_ids)}
    if cfg.fixtures is not None or cfg.endpoint:
        gateway = build_gateway(cfg)
        pairs = [(predictions.get(item_id, ""), references[item_id]) for item_id in item_ids]
        judge_scores, judge_failures = evaluate.judge_many(pairs, gateway)
        metadata["template_hashes"] = {
            template_id: template_hash(template)
            for template_id, template in sorted(gateway.templates.items())
        }
    else:
        log.info("no completion source configured; skipping the judge pass")

    report = evaluate.aggregate(
        rouge_scores, judge_scores,
        judge_failures=judge_failures, metadata=metadata,
    )
    payload = report.to_json_dict()
    if args.report:
        _write_json(Path(args.report), payload)
    _print_summary(payload)
    return EXIT_OK


def cmd_eval_mcq(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    items = datagen.load_mcq_items(Path(args.items))
    predictions = _read_text_map(Path(args.predictions), "predictions")
    baseline = _read_text_map(Path(args.baseline), "baseline")
    baseline_results = evaluate.grade_mcq(items, baseline)
    partition = evaluate.partition_easy_hard(items, baseline_results)
    results = evaluate.grade_mcq(items, predictions)
    report = evaluate.aggregate(
        mcq_results=results, partition=partition,
        metadata={"items": len(items)},
    )
    payload = report.to_json_dict()
    if args.report:
        _write_json(Path(args.report), payload)
    _print_summary(payload)
    return EXIT_OK


def cmd_query(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    graph_dir = Path(args.graph) if args.graph else cfg.out / "graph"
    if not (graph_dir / "manifest.json").is_file():
        raise ConfigError(f"no graph found at {graph_dir}; run build-kg first")
    gateway = build_gateway(cfg)
    graph = kg_store.load(graph_dir)
    idx = rag.index(graph)
    answer = rag.answer_with_citations(idx, args.query, gateway, k=args.k)
    transcript = rag.transcript_dict(answer)
    if args.report:
        _write_json(Path(args.report), transcript)
    _print_summary(transcript)
    return EXIT_OK


_HANDLERS = {
    "ingest": cmd_ingest,
    "filter": cmd_filter,
    "extract": cmd_extract,
    "build-kg": cmd_build_kg,
    "gen-dataset": cmd_gen_dataset,
    "eval-qa": cmd_eval_qa,
    "eval-mcq": cmd_eval_mcq,
    "query": cmd_query,
}


def _add_common(parser: argparse.ArgumentParser, *, fixtures: bool = True) -> None:
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--corpus", help="corpus JSONL path")
    parser.add_argument("--schema", help="ontology schema JSON path (bundled by default)")
    if fixtures:
        parser.add_argument("--fixtures", help="completion fixture JSONL for replay")
    parser.add_argument("--out", help="output directory (default: ./out)")
    parser.add_argument("--max-inflight", type=int, dest="max_inflight",
                        help="concurrent completion cap (default: 4)")


def build_parser() -> _Parser:
    parser = _Parser(prog="litkg", description="Literature knowledge-graph pipeline")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", help="parse and normalize the corpus")
    _add_common(p, fixtures=False)

    p = sub.add_parser("filter", help="route documents to relevant sub-ontologies")
    _add_common(p)

    p = sub.add_parser("extract", help="extract knowledge candidates from routed documents")
    _add_common(p)

    p = sub.add_parser("build-kg", help="disambiguate, dedupe, and persist the graph")
    _add_common(p, fixtures=False)

    p = sub.add_parser("gen-dataset", help="generate the instruction dataset")
    _add_common(p)

    p = sub.add_parser("eval-qa", help="score QA predictions against references")
    _add_common(p)
    p.add_argument("--predictions", required=True, help="predictions JSONL ({item_id, text})")
    p.add_argument("--references", required=True, help="references JSONL ({item_id, text})")
    p.add_argument("--report", help="write the report JSON here as well as stdout")

    p = sub.add_parser("eval-mcq", help="grade multiple-choice predictions")
    _add_common(p)
    p.add_argument("--items", required=True, help="MCQ items JSONL")
    p.add_argument("--predictions", required=True, help="predictions JSONL ({item_id, text})")
    p.add_argument("--baseline", required=True,
                   help="baseline predictions JSONL for the easy/hard split")
    p.add_argument("--report", help="write the report JSON here as well as stdout")

    p = sub.add_parser("query", help="answer a question from the knowledge graph")
    _add_common(p)
    p.add_argument("query", help="question text")
    p.add_argument("--graph", help="graph directory (default: <out>/graph)")
    p.add_argument("--k", type=int, default=rag.DEFAULT_K, help="retrieval depth (default: 10)")
    p.add_argument("--report", help="write the transcript JSON here as well as stdout")

    return parser


def run(argv=None) -> int:
    if not logging.getLogger().handlers:
        logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    try:
        cfg = resolve_config(args, os.environ)
        return _HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(json.dumps({"stage": args.command, "error": type(exc).__name__,
                          "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # stage failures must map to the exit contract
        print(json.dumps({"stage": args.command, "error": type(exc).__name__,
                          "message": str(exc)}), file=sys.stderr)
        return EXIT_STAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
