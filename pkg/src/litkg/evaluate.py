"""Evaluation: Rouge-L, rubric-based judging, and MCQ grading with splits.

All statistics are computed from explicit inputs so a report is reproducible
from its inputs alone; the tokenizer and F-beta are pinned and recorded in
the report metadata.
"""
from __future__ import annotations

import json
import re
import statistics
import string
from dataclasses import dataclass
from typing import Mapping, Sequence

from .lcs import lcs_length
from .llm_gateway import CompletionRequest, LlmGateway
from .parsing import JsonExtractError, first_json_value

TOKENIZER_ID = "lower_ws_edgepunct_v1"
ROUGE_BETA = 1.0

_JUDGE_CRITERIA = ("accuracy", "completeness", "relevance", "clarity")


def tokenize(text: str) -> list[str]:
    """Whitespace split, strip ASCII punctuation at token edges, casefold.

    Interior punctuation survives, so hyphenated terms and unit strings such
    as "25 mA/cm2" keep their shape.
    """
    tokens = []
    for piece in text.split():
        token = piece.strip(string.punctuation).casefold()
        if token:
            tokens.append(token)
    return tokens


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float
    lcs_length: int


def rouge_l(candidate_tokens: Sequence[str], reference_tokens: Sequence[str]) -> RougeScore:
    """Rouge-L from token sequences; either side empty scores zero."""
    if not candidate_tokens or not reference_tokens:
        return RougeScore(0.0, 0.0, 0.0, 0)
    lcs = lcs_length(candidate_tokens, reference_tokens)
    precision = lcs / len(candidate_tokens)
    recall = lcs / len(reference_tokens)
    if precision + recall == 0.0:
        return RougeScore(0.0, 0.0, 0.0, lcs)
    beta_sq = ROUGE_BETA * ROUGE_BETA
    f1 = (1.0 + beta_sq) * precision * recall / (recall + beta_sq * precision)
    return RougeScore(precision, recall, f1, lcs)


def rouge_l_text(candidate: str, reference: str) -> RougeScore:
    return rouge_l(tokenize(candidate), tokenize(reference))


class JudgeParseError(Exception):
    pass


class JudgeRangeError(JudgeParseError):
    pass


@dataclass(frozen=True)
class CriterionScore:
    score: int
    explanation: str


@dataclass(frozen=True)
class JudgeScore:
    accuracy: CriterionScore
    completeness: CriterionScore
    relevance: CriterionScore
    clarity: CriterionScore
    overall: CriterionScore

    def criterion(self, name: str) -> CriterionScore:
        if name not in _JUDGE_CRITERIA and name != "overall":
            raise KeyError(name)
        return getattr(self, name)


def _coerce_score(value) -> int:
    if isinstance(value, bool):
        raise JudgeParseError(f"score is not an integer: {value!r}")
    if isinstance(value, int):
        score = value
    elif isinstance(value, float) and value.is_integer():
        score = int(value)
    else:
        raise JudgeParseError(f"score is not an integer: {value!r}")
    if not 1 <= score <= 5:
        raise JudgeRangeError(f"score {score} outside [1, 5]")
    return score


def parse_judge_reply(text: str) -> JudgeScore:
    try:
        value = first_json_value(text)
    except JsonExtractError as exc:
        raise JudgeParseError(str(exc)) from None
    if not isinstance(value, Mapping):
        raise JudgeParseError("judge reply is not a JSON object")
    parts = {}
    for name in _JUDGE_CRITERIA + ("overall",):
        block = value.get(name)
        if not isinstance(block, Mapping) or "score" not in block:
            raise JudgeParseError(f"missing criterion block {name!r}")
        score = _coerce_score(block["score"])
        note = block.get("summary" if name == "overall" else "explanation", "")
        parts[name] = CriterionScore(score, str(note))
    return JudgeScore(**parts)


def judge_qa(model_response: str, ground_truth: str, gateway: LlmGateway) -> JudgeScore:
    request = CompletionRequest(
        template_id="judge",
        bindings={"model_response": model_response, "ground_truth": ground_truth},
    )
    reply = gateway.complete(request)
    return parse_judge_reply(reply.text)


@dataclass(frozen=True)
class JudgeFailure:
    index: int
    kind: str
    message: str


def judge_many(
    pairs: Sequence[tuple[str, str]], gateway: LlmGateway
) -> tuple[list[JudgeScore], list[JudgeFailure]]:
    """Score (model_response, ground_truth) pairs; malformed replies are
    flagged and excluded rather than aborting the run."""
    scores: list[JudgeScore] = []
    failures: list[JudgeFailure] = []
    for index, (model_response, ground_truth) in enumerate(pairs):
        try:
            scores.append(judge_qa(model_response, ground_truth, gateway))
        except JudgeParseError as exc:
            failures.append(JudgeFailure(index, type(exc).__name__, str(exc)))
    return scores, failures


_CHOICE_WHOLE_RE = re.compile(r"^\s*([A-H])\s*[.):]?\s*$")
_CHOICE_ANSWER_RE = re.compile(r"answer\s+is\s*:?\s*\(?([A-H])\b", re.IGNORECASE)
_CHOICE_PAREN_RE = re.compile(r"\(([A-H])\)")


def extract_choice(text: str) -> str | None:
    """Pull the chosen option letter out of a free-form MCQ response.

    A bare letter wins outright; otherwise the earliest of an "answer is X"
    phrase or a parenthesized letter. Only capital A-H count.
    """
    whole = _CHOICE_WHOLE_RE.match(text)
    if whole:
        return whole.group(1)
    candidates = [m for m in (_CHOICE_ANSWER_RE.search(text), _CHOICE_PAREN_RE.search(text)) if m]
    if not candidates:
        return None
    return min(candidates, key=lambda m: m.start()).group(1)


@dataclass(frozen=True)
class McqResult:
    item_id: str
    predicted: str | None
    correct: bool


class UnknownItemError(KeyError):
    pass


def grade_mcq(items: Sequence, predictions: Mapping[str, str]) -> list[McqResult]:
    """Grade free-form responses against the key; missing or unparseable
    responses count as incorrect, unknown item ids are an input error."""
    known = {item.item_id for item in items}
    unknown = sorted(set(predictions) - known)
    if unknown:
        raise UnknownItemError(f"predictions for unknown items: {', '.join(unknown)}")
    results = []
    for item in items:
        text = predictions.get(item.item_id)
        predicted = extract_choice(text) if text is not None else None
        results.append(McqResult(item.item_id, predicted, predicted == item.answer_key))
    return results


class PartitionCoverageError(ValueError):
    pass


def partition_easy_hard(
    items: Sequence, baseline_results: Sequence[McqResult]
) -> tuple[frozenset[str], frozenset[str]]:
    """Split items by whether the baseline got them right (easy) or not."""
    by_id = {r.item_id: r for r in baseline_results}
    missing = sorted({item.item_id for item in items} - set(by_id))
    if missing:
        raise PartitionCoverageError(f"baseline results missing items: {', '.join(missing)}")
    easy = frozenset(item.item_id for item in items if by_id[item.item_id].correct)
    hard = frozenset(item.item_id for item in items) - easy
    return easy, hard


def _accuracy_block(results: Sequence[McqResult]) -> dict:
    total = len(results)
    correct = sum(1 for r in results if r.correct)
    return {
        "accuracy": (correct / total) if total else 0.0,
        "correct": correct,
        "total": total,
    }


@dataclass(frozen=True)
class EvalReport:
    rouge: dict | None
    judge: dict | None
    mcq: dict | None
    counts: dict
    metadata: dict

    def to_json_dict(self) -> dict:
        return {
            "rouge": self.rouge,
            "judge": self.judge,
            "mcq": self.mcq,
            "counts": self.counts,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True, ensure_ascii=False)


def aggregate(
    rouge_scores: Sequence[RougeScore] = (),
    judge_scores: Sequence[JudgeScore] = (),
    mcq_results: Sequence[McqResult] = (),
    partition: tuple[frozenset[str], frozenset[str]] | None = None,
    *,
    judge_failures: Sequence[JudgeFailure] = (),
    metadata: Mapping[str, object] | None = None,
) -> EvalReport:
    """Fold per-item scores into one deterministic report."""
    rouge_block = None
    if rouge_scores:
        rouge_block = {
            "mean_precision": statistics.mean(s.precision for s in rouge_scores),
            "mean_recall": statistics.mean(s.recall for s in rouge_scores),
            "mean_f1": statistics.mean(s.f1 for s in rouge_scores),
            "median_f1": statistics.median(s.f1 for s in rouge_scores),
        }

    judge_block = None
    if judge_scores or judge_failures:
        per_criterion = {}
        if judge_scores:
            for name in _JUDGE_CRITERIA + ("overall",):
                per_criterion[name] = statistics.mean(
                    s.criterion(name).score for s in judge_scores
                )
        judge_block = {
            "per_criterion": per_criterion,
            "scored": len(judge_scores),
            "excluded": len(judge_failures),
            "failures": [
                {"index": f.index, "kind": f.kind, "message": f.message}
                for f in judge_failures
            ],
        }

    mcq_block = None
    if mcq_results:
        mcq_block = {"all": _accuracy_block(mcq_results)}
        if partition is not None:
            easy, hard = partition
            mcq_block["easy"] = _accuracy_block([r for r in mcq_results if r.item_id in easy])
            mcq_block["hard"] = _accuracy_block([r for r in mcq_results if r.item_id in hard])

    meta = {"tokenizer_id": TOKENIZER_ID, "rouge_beta": ROUGE_BETA}
    if metadata:
        meta.update(metadata)

    counts = {
        "rouge_pairs": len(rouge_scores),
        "judge_scored": len(judge_scores),
        "judge_excluded": len(judge_failures),
        "mcq_items": len(mcq_results),
    }
    return EvalReport(rouge_block, judge_block, mcq_block, counts, meta)
