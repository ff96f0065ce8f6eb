from __future__ import annotations

import json

import pytest

from belief.arbitration import INVALID, ArbitrationInput, DominantPath, select_by_confidence
from belief.clients import RawDocument, ReplayRetriever, ReplayStore, ReplayTextClient
from belief.errors import ConfigurationError, SchemaError, UsageError
from belief.evidence import EvidenceAnnotation, EvidenceObject, Quality, Relevance, Support
from belief.frame import make_frame
from belief.fusion import UNCERTAIN
from belief.pipeline import (
    AnalysisMode,
    Clients,
    PipelineConfig,
    QuestionRecord,
    Variant,
    analyze_question,
    annotate_evidence,
    compose_query,
    content_words,
    fixture_gaps,
    load_dataset,
    neural_infer,
    parse_label,
    retrieve,
    run_dataset,
    run_question,
    structure_evidence,
)
from belief.prompts import PromptLibrary

from .conftest import DATASET

PROMPTS = PromptLibrary.default()
YNM_Q = QuestionRecord("t1", "Does drug X lower blood pressure in adults?", {"yes": "yes", "no": "no", "maybe": "maybe"}, "yes")
MC_Q = QuestionRecord("t2", "Which vitamin?", {"A": "Thiamine", "B": "Niacin", "C": "Cobalamin", "D": "Folate"}, "A")


def store_of(*records):
    return ReplayStore.from_lines([json.dumps(r) for r in records])


def entry(stage, response=None, qid="t1", index=0, error=None):
    rec = {"stage": stage, "question_id": qid, "item_index": index}
    if error is not None:
        rec["error"] = error
    else:
        rec["response"] = response
    return rec


class TestQuestionRecord:
    def test_list_options(self):
        q = QuestionRecord.from_dict({"id": 1, "question": "Q?", "options": ["yes", "no", "maybe"], "gold": "no"})
        assert q.id == "1" and list(q.options) == ["yes", "no", "maybe"] and q.gold == "no"

    def test_default_options(self):
        assert list(QuestionRecord.from_dict({"id": "a", "question": "Q?"}).options) == ["yes", "no", "maybe"]

    def test_dict_options(self):
        q = QuestionRecord.from_dict({"id": "a", "question": "Q?", "options": {"A": "x", "B": "y"}})
        assert q.frame.labels == ("A", "B") and q.options["B"] == "y" and q.gold is None

    @pytest.mark.parametrize(
        "data",
        [
            {"question": "Q?"},
            {"id": "a"},
            {"id": "a", "question": "Q?", "options": ["only"]},
            {"id": "a", "question": "Q?", "options": ["x", "x"]},
            {"id": "a", "question": "Q?", "gold": "perhaps"},
            {"id": "a", "question": "Q?", "options": "yes/no"},
        ],
    )
    def test_invalid(self, data):
        with pytest.raises(SchemaError):
            QuestionRecord.from_dict(data)

    def test_load_bundled_dataset(self):
        records = load_dataset(DATASET)
        assert len(records) == 10
        assert len({q.id for q in records}) == 10

    def test_load_reports_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"id": "a", "question": "Q?"}\n{"id": "b"}\n')
        with pytest.raises(SchemaError, match="line 2"):
            load_dataset(path)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            PipelineConfig(k=0)
        with pytest.raises(ConfigurationError):
            PipelineConfig(tau=-0.1)
        with pytest.raises(ConfigurationError):
            PipelineConfig(arbitration_mode="vote")

    @pytest.mark.parametrize("text,expected", [("full", Variant.FULL), ("NO-DS", Variant.NO_DS), ("w/o_RA", Variant.NO_RA)])
    def test_variant_parse(self, text, expected):
        assert PipelineConfig(variant=text).variant is expected

    def test_unknown_variant(self):
        with pytest.raises(ConfigurationError):
            Variant.parse("no_everything")


class TestAnalysis:
    def test_foreground(self):
        response = {
            "mode": "FOREGROUND_PICOS",
            "picos": {"population": "adults", "intervention": "drug X", "comparison": None, "outcome": "BP", "study_design": None},
            "concepts": [],
            "core_keywords": ["drug X", "blood pressure"],
            "aux_keywords": ["hypertension"],
        }
        client = ReplayTextClient(store_of(entry("analyze", response)))
        a = analyze_question(YNM_Q, client, PROMPTS)
        assert a.mode is AnalysisMode.FOREGROUND_PICOS
        assert a.picos.population == "adults" and a.picos.comparison is None
        assert a.core_keywords == ("drug X", "blood pressure")

    def test_background(self):
        response = {"mode": "BACKGROUND_CONCEPTS", "concepts": ["gene X", "function"], "core_keywords": ["gene X"]}
        a = analyze_question(YNM_Q, ReplayTextClient(store_of(entry("analyze", response))), PROMPTS)
        assert a.mode is AnalysisMode.BACKGROUND_CONCEPTS
        assert a.picos is None and a.concepts == ("gene X", "function")

    def test_prose_then_fallback(self):
        from belief.pipeline import _Trace

        trace = _Trace()
        a = analyze_question(YNM_Q, ReplayTextClient(store_of(entry("analyze", "prose"))), PROMPTS, trace)
        assert a.core_keywords == ("drug", "lower", "blood")
        assert trace.degraded == ["analyze:fallback"]

    def test_missing_core_uses_content_words(self):
        a = analyze_question(YNM_Q, ReplayTextClient(store_of(entry("analyze", {"mode": "BACKGROUND_CONCEPTS"}))), PROMPTS)
        assert a.core_keywords == tuple(content_words(YNM_Q.text)[:3])

    def test_content_words(self):
        assert content_words("What is the role of BRCA1 in the breast?") == ["role", "brca1", "breast"]


class TestComposeQuery:
    def test_core_and_aux(self):
        assert compose_query(["aspirin", "stroke"], ["TIA", "recurrence"]) == "(aspirin AND stroke) AND (TIA OR recurrence)"

    def test_core_only(self):
        assert compose_query(["aspirin"], []) == "(aspirin)"

    def test_blank_entries_dropped(self):
        assert compose_query(["a", " "], ["", "b"]) == "(a) AND (b)"

    def test_needs_core(self):
        with pytest.raises(UsageError):
            compose_query([], ["x"])


class TestRetrieve:
    DOCS = [{"id": f"P{i}", "text": f"doc {i}"} for i in range(7)]

    def test_truncates_to_k(self):
        r = ReplayRetriever(store_of(entry("retrieve", self.DOCS)))
        assert [d.id for d in retrieve("q", 5, r, "t1")] == ["P0", "P1", "P2", "P3", "P4"]

    def test_short_pool(self):
        r = ReplayRetriever(store_of(entry("retrieve", self.DOCS[:2])))
        assert len(retrieve("q", 5, r, "t1")) == 2

    def test_retry_then_empty(self):
        from belief.pipeline import _Trace

        trace = _Trace()
        r = ReplayRetriever(store_of(entry("retrieve", error="503"), entry("retrieve", error="503")))
        assert retrieve("q", 5, r, "t1", trace) == []
        assert trace.degraded == ["retrieve:empty"]

    def test_retry_succeeds(self):
        r = ReplayRetriever(store_of(entry("retrieve", error="503"), entry("retrieve", self.DOCS[:1])))
        assert len(retrieve("q", 5, r, "t1")) == 1

    def test_k_must_be_positive(self):
        with pytest.raises(UsageError):
            retrieve("q", 0, ReplayRetriever(store_of()), "t1")


class TestStructure:
    DOC = RawDocument("P1", "In a randomized trial drug X lowered systolic pressure.", "Trial")

    def test_structured(self):
        response = {"picos": {"population": "adults", "study_design": "RCT"}, "core_concepts": ["drug X"], "snippet": "drug X lowered pressure"}
        obj = structure_evidence(self.DOC, YNM_Q, ReplayTextClient(store_of(entry("structure", response))), PROMPTS)
        assert obj.id == "P1" and obj.snippet == "drug X lowered pressure"
        assert obj.picos.population == "adults" and obj.picos.outcome is None
        assert obj.source_meta == "Trial"

    def test_background_doc_has_empty_picos(self):
        response = {"picos": None, "core_concepts": ["gene X"], "snippet": "gene X encodes a kinase"}
        obj = structure_evidence(self.DOC, YNM_Q, ReplayTextClient(store_of(entry("structure", response))), PROMPTS)
        assert obj.picos.is_empty and obj.core_concepts == ("gene X",)

    def test_failure_passes_document_through(self):
        obj = structure_evidence(self.DOC, YNM_Q, ReplayTextClient(store_of(entry("structure", "nope"))), PROMPTS)
        assert obj.snippet == self.DOC.text and obj.picos.is_empty

    def test_no_sep_skips_model(self):
        obj = structure_evidence(self.DOC, YNM_Q, ReplayTextClient(store_of()), PROMPTS, variant=Variant.NO_SEP)
        assert obj.snippet == self.DOC.text


class TestAnnotate:
    OBJ = EvidenceObject("P1", "drug X lowered pressure")

    def test_pass_through(self):
        resp = {"quality": "RCT", "relevance": "HIGH", "support": "STRONG", "hypothesis": "yes"}
        ann = annotate_evidence(self.OBJ, YNM_Q, YNM_Q.frame, ReplayTextClient(store_of(entry("annotate", resp))), PROMPTS)
        assert ann == EvidenceAnnotation("P1", Quality.RCT, Relevance.HIGH, Support.STRONG, "yes")

    def test_model_cannot_change_evidence_id(self):
        resp = {"evidence_id": "other", "quality": "RCT", "relevance": "HIGH", "support": "STRONG", "hypothesis": "yes"}
        ann = annotate_evidence(self.OBJ, YNM_Q, YNM_Q.frame, ReplayTextClient(store_of(entry("annotate", resp))), PROMPTS)
        assert ann.evidence_id == "P1"

    def test_sanitized(self):
        resp = {"quality": "RCTT", "relevance": "HIGH", "support": "STRONG", "hypothesis": "yes"}
        ann = annotate_evidence(self.OBJ, YNM_Q, YNM_Q.frame, ReplayTextClient(store_of(entry("annotate", resp))), PROMPTS)
        assert ann.quality is Quality.UNCLEAR_BASIC

    def test_failure_gives_lowest(self):
        ann = annotate_evidence(self.OBJ, YNM_Q, YNM_Q.frame, ReplayTextClient(store_of(entry("annotate", "prose"))), PROMPTS)
        assert ann == EvidenceAnnotation.lowest("P1")

    def test_no_et_uses_fixed_labels(self):
        client = ReplayTextClient(store_of(entry("annotate_support", {"hypothesis": "no"})))
        ann = annotate_evidence(self.OBJ, YNM_Q, YNM_Q.frame, client, PROMPTS, variant=Variant.NO_ET)
        assert (ann.quality, ann.relevance, ann.support, ann.hypothesis) == (
            Quality.COHORT,
            Relevance.MEDIUM,
            Support.MODERATE,
            "no",
        )


class TestParseLabel:
    FRAME = make_frame(["A", "B", "C", "D"])
    YNM = make_frame(["yes", "no", "maybe"])

    @pytest.mark.parametrize(
        "text,expected",
        [
            ("B", "B"),
            ("b", "B"),
            ("(C).", "C"),
            ("The answer is B.", "B"),
            ("Answer: D", "D"),
            ("E", INVALID),
            ("", INVALID),
            ("A or B", INVALID),
            ("I choose option C because", "C"),
        ],
    )
    def test_multiple_choice(self, text, expected):
        assert parse_label(text, self.FRAME) == expected

    @pytest.mark.parametrize(
        "text,expected",
        [("The answer is maybe.", "maybe"), ("Yes", "yes"), ("no, not at all", "no"), ("yes or no", INVALID), ("uncertain", INVALID)],
    )
    def test_yes_no_maybe(self, text, expected):
        assert parse_label(text, self.YNM) == expected

    def test_option_text(self):
        assert parse_label("It is thiamine deficiency", self.FRAME, MC_Q.options) == "A"


class TestNeural:
    def test_json_answer(self):
        resp = {"answer": "B", "rationale": "because (B)", "confidence": 0.7}
        out = neural_infer(MC_Q, MC_Q.frame, (), ReplayTextClient(store_of(entry("neural", resp, qid="t2"))), PROMPTS)
        assert (out.parsed_label, out.confidence, out.rationale) == ("B", 0.7, "because (B)")

    def test_prose_answer(self):
        client = ReplayTextClient(store_of(entry("neural", "The answer is maybe.")))
        out = neural_infer(YNM_Q, YNM_Q.frame, (), client, PROMPTS)
        assert out.parsed_label == "maybe" and out.confidence is None

    def test_out_of_frame(self):
        client = ReplayTextClient(store_of(entry("neural", {"answer": "E", "rationale": "", "confidence": 0.5}, qid="t2")))
        assert neural_infer(MC_Q, MC_Q.frame, (), client, PROMPTS).parsed_label == INVALID

    def test_percent_confidence(self):
        client = ReplayTextClient(store_of(entry("neural", {"answer": "yes", "confidence": 85})))
        assert neural_infer(YNM_Q, YNM_Q.frame, (), client, PROMPTS).confidence == pytest.approx(0.85)

    def test_client_failure(self):
        client = ReplayTextClient(store_of(entry("neural", error="down")))
        assert neural_infer(YNM_Q, YNM_Q.frame, (), client, PROMPTS).parsed_label == INVALID


class TestRunFixtures:
    def test_full_run_is_deterministic(self, records, replay_clients):
        first = [r.to_json() for r in run_dataset(records, PipelineConfig(), replay_clients)]
        second = [r.to_json() for r in run_dataset(records, PipelineConfig(), replay_clients, concurrency=4)]
        assert first == second

    def test_results_in_input_order(self, records, replay_clients):
        results = run_dataset(records, PipelineConfig(), replay_clients, concurrency=3)
        assert [r.question_id for r in results] == [q.id for q in records]

    def test_scenarios(self, records, replay_clients):
        by_id = {r.question_id: r for r in run_dataset(records, PipelineConfig(), replay_clients)}
        assert by_id["q01"].arbitration.dominant_path is DominantPath.AGREEMENT
        assert by_id["q02"].final_answer == "A" and by_id["q02"].z_llm == "B"
        assert by_id["q02"].arbitration.dominant_path is DominantPath.SYMBOLIC
        assert by_id["q03"].z_ds == UNCERTAIN and by_id["q03"].arbitration.dominant_path is DominantPath.NEURAL
        assert len(by_id["q04"].evidence) == 5
        assert by_id["q05"].analysis.core_keywords == ("vitamin D", "fracture")
        assert by_id["q05"].annotations[0].quality is Quality.UNCLEAR_BASIC
        assert by_id["q06"].z_llm == "maybe"
        assert by_id["q07"].z_llm == INVALID and by_id["q07"].final_answer == "A"
        assert by_id["q08"].evidence == () and by_id["q08"].degraded == ("retrieve:empty",)
        assert by_id["q08"].fusion.uncertainty == 1.0
        assert len(by_id["q09"].evidence) == 2
        assert by_id["q10"].degraded == ("structure[0]:passthrough", "annotate[1]:non-informative")

    def test_k_controls_depth(self, records, replay_clients):
        q04 = next(q for q in records if q.id == "q04")
        assert len(run_question(q04, PipelineConfig(k=7), replay_clients).evidence) == 7
        assert len(run_question(q04, PipelineConfig(k=1), replay_clients).evidence) == 1

    def test_no_ds_contract(self, records, replay_clients):
        for r in run_dataset(records, PipelineConfig(variant="no_ds"), replay_clients):
            assert r.fusion_skipped and r.annotations == ()
            if r.z_llm != INVALID:
                assert r.final_answer == r.z_llm
            else:
                assert "final:first-option" in r.degraded

    def test_no_llm_contract(self, records, replay_clients):
        for r in run_dataset(records, PipelineConfig(variant="no_llm"), replay_clients):
            assert r.z_llm == INVALID
            expected = r.z_ds if r.z_ds != UNCERTAIN else r.fusion.frame.labels[r.fusion.belief_vector.index(max(r.fusion.belief_vector))]
            assert r.final_answer == expected

    def test_no_ra_contract(self, records, replay_clients):
        for q, r in zip(records, run_dataset(records, PipelineConfig(variant="no_ra"), replay_clients)):
            inp = ArbitrationInput(
                q.text, q.frame, r.evidence, r.z_ds, r.fusion.belief_vector, r.fusion.uncertainty,
                r.fusion.aggregate_reliability, r.z_llm, r.neural.rationale, r.neural.confidence, q.options,
            )
            assert r.final_answer == select_by_confidence(inp).answer

    def test_no_sep_and_no_et_run(self, records, replay_clients):
        no_sep = run_dataset(records, PipelineConfig(variant="no_sep"), replay_clients)
        assert all(e.picos.is_empty for r in no_sep for e in r.evidence)
        no_et = run_dataset(records, PipelineConfig(variant="no_et"), replay_clients)
        assert all(a.quality is Quality.COHORT for r in no_et for a in r.annotations if a.hypothesis)

    def test_prompt_arbitration(self, records, replay_clients):
        by_id = {r.question_id: r for r in run_dataset(records, PipelineConfig(arbitration_mode="prompt"), replay_clients)}
        assert by_id["q02"].arbitration.rationale.startswith("The neural rationale")
        assert by_id["q03"].arbitration.rationale.startswith("[fallback")
        assert by_id["q03"].final_answer == "yes"

    def test_result_schema(self, records, replay_clients):
        d = run_question(records[0], PipelineConfig(), replay_clients).to_dict()
        assert list(d)[:6] == ["question_id", "variant", "final_answer", "z_ds", "z_llm", "fusion"]
        assert "gold" not in json.dumps(d)


class TestGoldIsolation:
    def test_prompts_identical_without_gold(self, records, store):
        from dataclasses import replace

        from belief.clients import RecordingTextClient

        def prompts_for(recs):
            llm = RecordingTextClient(ReplayTextClient(store))
            run_dataset(recs, PipelineConfig(arbitration_mode="prompt"), Clients(llm, ReplayRetriever(store)))
            return llm.prompts

        with_gold = prompts_for(records)
        without = prompts_for([replace(q, gold=None) for q in records])
        assert with_gold == without and len(with_gold) > 50


class TestFixtureGaps:
    def test_bundled_corpus_complete(self, store, records):
        for variant in Variant:
            assert fixture_gaps(store, records, 10, variant) == []

    def test_reports_missing(self, records):
        store = store_of(
            {"stage": "retrieve", "question_id": "q01", "item_index": 0, "response": [{"id": "x", "text": "t"}]}
        )
        gaps = fixture_gaps(store, records[:2], 5)
        assert "structure/q01/0" in gaps and "neural/q01/0" in gaps and "retrieve/q02/0" in gaps
