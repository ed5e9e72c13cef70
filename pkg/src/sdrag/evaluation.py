"""Judge-based metric suite: faithfulness, answer relevancy, context
precision, context recall.

Every judge call must reply with a strict JSON object
``{"units": [{"text", "verdict", "rationale"}]}``; one repair retry is
attempted before :class:`JudgeFormatError`. Scores are in [0, 1] or N/A
(``None``); suite averages exclude N/A values.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import JudgeFormatError, SdragError
from .providers import ChatClient, EmbeddingClient, user_request


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class despite the name

    case_id: str
    question: str
    ground_truth: str
    answer: str
    contexts: tuple[str, ...] = ()
    ground_truth_has_context: bool = True

    def __post_init__(self) -> None:
        if not self.question.strip() or not self.ground_truth.strip():
            raise ValueError("question and ground_truth must be non-empty")
        if not self.contexts and self.ground_truth_has_context:
            raise ValueError("contexts may be empty only when "
                             "ground_truth_has_context is false")


@dataclass(frozen=True)
class MetricScores:
    faithfulness: float | None = None
    answer_relevancy: float | None = None
    context_precision: float | None = None
    context_recall: float | None = None

    def to_dict(self) -> dict:
        return {
            "faithfulness": self.faithfulness,
            "answer_relevancy": self.answer_relevancy,
            "context_precision": self.context_precision,
            "context_recall": self.context_recall,
        }


METRIC_NAMES = ("faithfulness", "answer_relevancy", "context_precision",
                "context_recall")


@dataclass(frozen=True)
class JudgeVerdict:
    unit: str
    verdict: bool
    rationale: str = ""


def _prompt(name: str, **placeholders) -> str:
    """Load a prompt template and fill ``{key}`` placeholders (plain textual
    replacement; the templates contain literal JSON braces)."""
    text = resources.files("sdrag.data.prompts").joinpath(name).read_text("utf-8")
    for key, value in placeholders.items():
        text = text.replace("{" + key + "}", str(value))
    return text


def _parse_units(reply: str) -> list[JudgeVerdict] | None:
    try:
        data = json.loads(reply.strip())
    except ValueError:
        return None
    if not isinstance(data, dict) or not isinstance(data.get("units"), list):
        return None
    units = []
    for u in data["units"]:
        if not isinstance(u, dict) or not isinstance(u.get("text"), str):
            return None
        verdict = u.get("verdict", True)
        if not isinstance(verdict, bool):
            return None
        units.append(JudgeVerdict(unit=u["text"], verdict=verdict,
                                  rationale=str(u.get("rationale", ""))))
    return units


def ask_judge(judge: ChatClient, prompt: str,
              expect_count: int | None = None) -> list[JudgeVerdict]:
    """One judge call with a single repair retry on malformed output."""
    request_text = prompt
    for attempt in range(2):
        reply = judge.chat_complete(user_request(request_text))
        units = _parse_units(reply)
        if units is not None and (expect_count is None or len(units) == expect_count):
            return units
        request_text = prompt + "\n\n" + _prompt("judge_repair.txt").strip()
    raise JudgeFormatError(f"judge reply stayed malformed: {reply[:200]!r}")


def _numbered(items: Sequence[str]) -> str:
    return "\n".join(f"[{i}] {t}" for i, t in enumerate(items, start=1))


# --- pure score computations (shared by metrics and property tests) ------

def ratio_score(verdicts: Sequence[bool]) -> float | None:
    if not verdicts:
        return None
    return sum(verdicts) / len(verdicts)


def rank_weighted_precision(verdicts: Sequence[bool]) -> float | None:
    """Sum over ranks of precision@k * rel_k, divided by the number of
    relevant items; N/A when nothing is relevant."""
    relevant = sum(verdicts)
    if relevant == 0:
        return None
    total = 0.0
    seen = 0
    for k, rel in enumerate(verdicts, start=1):
        if rel:
            seen += 1
            total += seen / k
    return total / relevant


def mean_clamped(values: Sequence[float]) -> float:
    return float(min(1.0, max(0.0, sum(values) / len(values))))


# --- metrics --------------------------------------------------------------

def faithfulness(answer: str, contexts: Sequence[str], judge: ChatClient) -> float | None:
    """Decompose the answer into claims, verdict each against the contexts,
    return supported/total; N/A when the answer decomposes into no claims."""
    if not answer.strip():
        raise ValueError("answer must be non-empty")
    if not contexts:
        raise ValueError("contexts must be non-empty")
    claims = ask_judge(judge, _prompt("judge_claims.txt", answer=answer))
    if not claims:
        return None
    verdicts = ask_judge(
        judge,
        _prompt("judge_faithfulness.txt",
                contexts=_numbered(contexts),
                claims=_numbered([c.unit for c in claims])),
        expect_count=len(claims),
    )
    return ratio_score([v.verdict for v in verdicts])


def answer_relevancy(question: str, answer: str, judge: ChatClient,
                     embedder: EmbeddingClient, n_gen: int = 3) -> float:
    """Mean cosine similarity between the original question and ``n_gen``
    questions regenerated from the answer, clamped to [0, 1]."""
    if not question.strip() or not answer.strip():
        raise ValueError("question and answer must be non-empty")
    generated = ask_judge(
        judge, _prompt("judge_relevancy_questions.txt", answer=answer, n=n_gen),
        expect_count=n_gen)
    texts = [question] + [g.unit for g in generated]
    vectors = [np.asarray(v, dtype=np.float64) for v in embedder.embed_batch(texts)]
    q = vectors[0]
    qn = np.linalg.norm(q)
    sims = []
    for v in vectors[1:]:
        denom = qn * np.linalg.norm(v)
        sims.append(float(q @ v / denom) if denom > 0 else 0.0)
    return mean_clamped(sims)


def context_precision(question: str, contexts: Sequence[str], ground_truth: str,
                      judge: ChatClient) -> float | None:
    """Rank-weighted precision over per-context relevance verdicts."""
    if not contexts:
        raise ValueError("contexts must be non-empty")
    verdicts = ask_judge(
        judge,
        _prompt("judge_context_precision.txt",
                question=question, ground_truth=ground_truth,
                contexts=_numbered(contexts)),
        expect_count=len(contexts),
    )
    return rank_weighted_precision([v.verdict for v in verdicts])


@dataclass(frozen=True)
class _SentenceRules:
    patterns: tuple[re.Pattern, ...]


def _sentence_rules() -> _SentenceRules:
    raw = resources.files("sdrag.data").joinpath("sentence_rules.txt").read_text("utf-8")
    pats = tuple(re.compile(line) for line in raw.splitlines() if line.strip())
    return _SentenceRules(patterns=pats)


def split_sentences(text: str) -> list[str]:
    """Rule-based splitter on terminal punctuation and newlines."""
    parts = [text]
    for pat in _sentence_rules().patterns:
        parts = [piece for part in parts for piece in pat.split(part)]
    return [p.strip() for p in parts if p and p.strip()]


def context_recall(ground_truth: str, contexts: Sequence[str],
                   judge: ChatClient) -> float | None:
    """Fraction of ground-truth sentences attributable to the contexts."""
    if not ground_truth.strip():
        raise ValueError("ground_truth must be non-empty")
    sentences = split_sentences(ground_truth)
    if not sentences:
        return None
    verdicts = ask_judge(
        judge,
        _prompt("judge_context_recall.txt",
                contexts=_numbered(contexts), sentences=_numbered(sentences)),
        expect_count=len(sentences),
    )
    return ratio_score([v.verdict for v in verdicts])


# --- suite -----------------------------------------------------------------

@dataclass(frozen=True)
class CaseResult:
    case_id: str
    scores: MetricScores
    error: str | None = None


@dataclass(frozen=True)
class EvaluationReport:
    results: tuple[CaseResult, ...]
    averages: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "cases": [
                {"case_id": r.case_id, **r.scores.to_dict(), "error": r.error}
                for r in self.results
            ],
            "averages": self.averages,
        }

    def to_text_table(self) -> str:
        headers = ["case_id", *METRIC_NAMES, "error"]
        rows = [headers]
        for r in self.results:
            d = r.scores.to_dict()
            rows.append([r.case_id] + [_fmt(d[m]) for m in METRIC_NAMES]
                        + [r.error or ""])
        rows.append(["average"] + [_fmt(self.averages.get(m)) for m in METRIC_NAMES]
                    + [""])
        widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
        lines = []
        for i, row in enumerate(rows):
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines)


def _fmt(value: float | None) -> str:
    return "N/A" if value is None else f"{value:.4f}"


def evaluate_case(case: TestCase, judge: ChatClient,
                  embedder: EmbeddingClient) -> MetricScores:
    faith = None
    if case.contexts:
        faith = faithfulness(case.answer, case.contexts, judge)
    relevancy = answer_relevancy(case.question, case.answer, judge, embedder)
    precision = recall = None
    if case.ground_truth_has_context:
        precision = context_precision(case.question, case.contexts,
                                      case.ground_truth, judge)
        recall = context_recall(case.ground_truth, case.contexts, judge)
    return MetricScores(faithfulness=faith, answer_relevancy=relevancy,
                        context_precision=precision, context_recall=recall)


def evaluate_suite(cases: Sequence[TestCase], judge: ChatClient,
                   embedder: EmbeddingClient) -> EvaluationReport:
    """Score every case; a judge failure flags that case without aborting."""
    if not cases:
        raise ValueError("need at least one case")
    results = []
    for case in cases:
        try:
            scores = evaluate_case(case, judge, embedder)
            results.append(CaseResult(case_id=case.case_id, scores=scores))
        except SdragError as exc:
            results.append(CaseResult(case_id=case.case_id, scores=MetricScores(),
                                      error=str(exc)))
    averages = {}
    for metric in METRIC_NAMES:
        values = [getattr(r.scores, metric) for r in results
                  if r.error is None and getattr(r.scores, metric) is not None]
        averages[metric] = sum(values) / len(values) if values else None
    return EvaluationReport(results=tuple(results), averages=averages)


def load_cases(path: str | Path) -> list[TestCase]:
    """Read a JSONL test set of TestCase objects."""
    cases = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            raw = json.loads(line)
            cases.append(TestCase(
                case_id=str(raw.get("case_id", f"case-{line_no}")),
                question=raw["question"],
                ground_truth=raw["ground_truth"],
                answer=raw["answer"],
                contexts=tuple(raw.get("contexts", [])),
                ground_truth_has_context=bool(raw.get("ground_truth_has_context", True)),
            ))
    return cases
