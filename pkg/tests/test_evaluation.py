"""Metric oracles with scripted judges, suite behavior, monotonicity."""

from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdrag.errors import JudgeFormatError
from sdrag.evaluation import (
    EvaluationReport,
    MetricScores,
    TestCase,
    answer_relevancy,
    context_precision,
    context_recall,
    evaluate_suite,
    faithfulness,
    load_cases,
    rank_weighted_precision,
    ratio_score,
    split_sentences,
)

from conftest import VectorEmbedder, scripted


def units_reply(verdicts: list[bool], prefix: str = "u") -> str:
    return json.dumps({"units": [
        {"text": f"{prefix}{i}", "verdict": v, "rationale": "r"}
        for i, v in enumerate(verdicts)
    ]})


def claims_reply(n: int, prefix: str = "claim") -> str:
    return json.dumps({"units": [{"text": f"{prefix} {i}"} for i in range(n)]})


class TestFaithfulness:
    @pytest.mark.parametrize("supported,expected", [
        ([True] * 4, 1.0),
        ([True, True, False, False], 0.5),
        ([False] * 4, 0.0),
    ])
    def test_ratios(self, supported, expected):
        judge = scripted(claims_reply(4), units_reply(supported))
        assert faithfulness("the answer", ["ctx"], judge) == expected

    def test_no_claims_is_na(self):
        judge = scripted(json.dumps({"units": []}))
        assert faithfulness("answer", ["ctx"], judge) is None

    def test_preconditions(self):
        with pytest.raises(ValueError):
            faithfulness(" ", ["c"], scripted())
        with pytest.raises(ValueError):
            faithfulness("a", [], scripted())


class TestAnswerRelevancy:
    def test_identity_regeneration(self):
        q = "What is the TTR test"
        judge = scripted(json.dumps({"units": [{"text": q}] * 3}))
        out = answer_relevancy(q, "some answer", judge, scripted(dim=8))
        assert out == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_generations(self):
        judge = scripted(json.dumps({"units": [{"text": "g"}] * 3}))
        embedder = VectorEmbedder({
            "orig": np.array([1.0, 0.0]),
            "g": np.array([0.0, 1.0]),
        })
        assert answer_relevancy("orig", "ans", judge, embedder) == 0.0

    def test_known_cosines_mean(self):
        # vectors constructed so cos(q, g_i) is exactly 0.9 / 0.8 / 0.7
        mapping = {"orig": np.array([1.0, 0.0])}
        for i, c in enumerate((0.9, 0.8, 0.7)):
            mapping[f"g{i}"] = np.array([c, float(np.sqrt(1 - c * c))])
        judge = scripted(json.dumps({"units": [{"text": f"g{i}"} for i in range(3)]}))
        out = answer_relevancy("orig", "ans", judge, VectorEmbedder(mapping))
        assert out == pytest.approx(0.8, abs=1e-6)

    def test_negative_cosine_clamped(self):
        judge = scripted(json.dumps({"units": [{"text": "g"}] * 3}))
        embedder = VectorEmbedder({
            "orig": np.array([1.0, 0.0]),
            "g": np.array([-1.0, 0.0]),
        })
        assert answer_relevancy("orig", "ans", judge, embedder) == 0.0


class TestContextPrecision:
    def test_all_relevant(self):
        judge = scripted(units_reply([True, True, True]))
        out = context_precision("q", ["c1", "c2", "c3"], "gt", judge)
        assert out == pytest.approx(1.0)

    def test_mixed_verdicts(self):
        judge = scripted(units_reply([True, False, True]))
        out = context_precision("q", ["c1", "c2", "c3"], "gt", judge)
        assert out == pytest.approx((1 / 1 + 2 / 3) / 2, abs=1e-4)
        assert out == pytest.approx(0.8333, abs=1e-4)

    def test_none_relevant_is_na(self):
        judge = scripted(units_reply([False, False]))
        assert context_precision("q", ["c1", "c2"], "gt", judge) is None

    def test_unit_count_must_match(self):
        judge = scripted(units_reply([True]), units_reply([True]))
        with pytest.raises(JudgeFormatError):
            context_precision("q", ["c1", "c2"], "gt", judge)


class TestContextRecall:
    def test_all_attributable(self):
        gt = "One. Two. Three. Four."
        judge = scripted(units_reply([True] * 4))
        assert context_recall(gt, ["ctx"], judge) == 1.0

    def test_three_of_four(self):
        gt = "One. Two. Three. Four."
        judge = scripted(units_reply([True, True, True, False]))
        assert context_recall(gt, ["ctx"], judge) == 0.75

    def test_single_unattributable(self):
        judge = scripted(units_reply([False]))
        assert context_recall("Only one sentence.", ["ctx"], judge) == 0.0


class TestSentenceSplit:
    def test_terminal_punctuation_and_newlines(self):
        text = "First sentence. Second one!\nThird line? Fourth"
        assert split_sentences(text) == ["First sentence.", "Second one!",
                                         "Third line?", "Fourth"]

    def test_empty(self):
        assert split_sentences("   ") == []


class TestJudgeContract:
    def test_repair_retry_succeeds(self):
        judge = scripted("garbage", units_reply([True, False]))
        out = context_precision("q", ["c1", "c2"], "gt", judge)
        assert out == pytest.approx(1.0)  # only first context relevant

    def test_double_garbage_raises(self):
        judge = scripted("garbage", "more garbage")
        with pytest.raises(JudgeFormatError):
            context_recall("A sentence.", ["c"], judge)

    def test_nonbool_verdict_rejected(self):
        bad = json.dumps({"units": [{"text": "u", "verdict": "yes"}]})
        judge = scripted(bad, bad)
        with pytest.raises(JudgeFormatError):
            context_recall("A sentence.", ["c"], judge)


class TestSuite:
    def _case(self, cid: str, **kw) -> TestCase:
        defaults = dict(question="q?", ground_truth="The truth.",
                        answer="an answer", contexts=("ctx",),
                        ground_truth_has_context=True)
        defaults.update(kw)
        return TestCase(case_id=cid, **defaults)

    def test_average_excludes_na(self):
        # case 1: faithfulness 1.0; case 2: faithfulness 0.5
        judge = scripted(
            # case 1: claims, verdicts, relevancy qs, precision, recall
            claims_reply(2), units_reply([True, True]),
            json.dumps({"units": [{"text": "q?"}] * 3}),
            units_reply([True]), units_reply([True]),
            # case 2 (distinct claim texts so requests differ from case 1)
            claims_reply(2, prefix="other"), units_reply([True, False]),
            json.dumps({"units": [{"text": "q?"}] * 3}),
            units_reply([True]), units_reply([True]),
        )
        cases = [self._case("a", answer="first answer"),
                 self._case("b", answer="second answer")]
        report = evaluate_suite(cases, judge, scripted(dim=8))
        assert report.averages["faithfulness"] == pytest.approx(0.75)

    def test_q5_style_case(self):
        # no ground-truth context: precision/recall are N/A and excluded
        judge = scripted(
            claims_reply(1), units_reply([True]),
            json.dumps({"units": [{"text": "q?"}] * 3}),
        )
        case = self._case("q5", contexts=("irrelevant ctx",),
                          ground_truth_has_context=False)
        report = evaluate_suite([case], judge, scripted(dim=8))
        scores = report.results[0].scores
        assert scores.context_precision is None
        assert scores.context_recall is None
        assert scores.faithfulness == 1.0
        assert report.averages["context_precision"] is None
        assert report.averages["context_recall"] is None

    def test_judge_failure_flags_case_without_abort(self):
        judge = scripted(
            "garbage", "garbage",  # case 1 fails both faithfulness attempts
            claims_reply(1), units_reply([True]),
            json.dumps({"units": [{"text": "q?"}] * 3}),
            units_reply([True]), units_reply([True]),
        )
        cases = [self._case("bad", answer="broken answer"),
                 self._case("good", answer="fine answer")]
        report = evaluate_suite(cases, judge, scripted(dim=8))
        assert report.results[0].error is not None
        assert report.results[1].error is None
        assert report.averages["faithfulness"] == 1.0

    def test_report_serialization(self):
        report = EvaluationReport(
            results=(), averages={m: None for m in
                                  ("faithfulness", "answer_relevancy",
                                   "context_precision", "context_recall")})
        table = report.to_text_table()
        assert "faithfulness" in table and "N/A" in table

    def test_load_cases(self, tmp_path):
        path = tmp_path / "cases.jsonl"
        path.write_text(json.dumps({
            "case_id": "c1", "question": "q", "ground_truth": "g",
            "answer": "a", "contexts": ["x"],
        }) + "\n")
        cases = load_cases(path)
        assert cases[0].case_id == "c1" and cases[0].contexts == ("x",)

    def test_case_invariant(self):
        with pytest.raises(ValueError):
            TestCase(case_id="c", question="q", ground_truth="g", answer="a",
                     contexts=(), ground_truth_has_context=True)


class TestMonotonicity:
    @given(st.lists(st.booleans(), min_size=1, max_size=12))
    @settings(max_examples=150, deadline=None)
    def test_ratio_score_flip_never_decreases(self, verdicts):
        base = ratio_score(verdicts)
        for i, v in enumerate(verdicts):
            if not v:
                flipped = list(verdicts)
                flipped[i] = True
                assert ratio_score(flipped) >= base

    def test_precision_is_not_monotone_under_trailing_flips(self):
        # The rank-weighted formula (pinned by its own oracle example) is NOT
        # monotone under arbitrary negative->positive flips: a late relevant
        # context dilutes the rank-weighted average.
        assert rank_weighted_precision([True, False, False]) == 1.0
        assert rank_weighted_precision([True, False, True]) == pytest.approx(5 / 6)

    @given(st.lists(st.booleans(), min_size=0, max_size=12))
    @settings(max_examples=150, deadline=None)
    def test_precision_flip_before_first_relevant_never_decreases(self, tail):
        # flipping a negative that precedes every relevant item only helps
        verdicts = [False] + tail
        base = rank_weighted_precision(verdicts)
        flipped = rank_weighted_precision([True] + tail)
        if base is not None:
            assert flipped >= base - 1e-12

    @given(st.lists(st.booleans(), min_size=1, max_size=12))
    @settings(max_examples=150, deadline=None)
    def test_scores_bounded(self, verdicts):
        r = ratio_score(verdicts)
        p = rank_weighted_precision(verdicts)
        assert 0.0 <= r <= 1.0
        assert p is None or 0.0 <= p <= 1.0
