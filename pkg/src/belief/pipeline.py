"""End-to-end question answering over pluggable clients.

Per question: analyze, retrieve, structure, annotate, fuse, infer, arbitrate.
Every client call gets one retry; after that the stage degrades to a
documented fallback and the degradation is recorded in the result.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence, TypeVar

from .arbitration import (
    INVALID,
    ArbitrationInput,
    ArbitrationOutput,
    ArbitrationThresholds,
    DominantPath,
    ReliabilityStatus,
    argmax_label,
    arbitrate_llm,
    arbitrate_rule_based,
    explicit_mention,
    extract_json_object,
    select_by_confidence,
)
from .clients import RawDocument, ReplayStore, RetrievalClient, TextClient
from .errors import ClientError, ConfigurationError, ParseError, SchemaError, UsageError
from .evidence import (
    EvidenceAnnotation,
    EvidenceObject,
    Picos,
    Quality,
    Relevance,
    ScoreMap,
    Support,
    sanitize_annotation,
)
from .frame import Frame, make_frame
from .fusion import UNCERTAIN, FusionConfig, FusionResult, fuse_evidence
from .prompts import PromptLibrary

log = logging.getLogger(__name__)

T = TypeVar("T")

PUBMEDQA_OPTIONS = ("yes", "no", "maybe")


class Variant(str, Enum):
    FULL = "full"
    NO_SEP = "no_sep"
    NO_ET = "no_et"
    NO_DS = "no_ds"
    NO_LLM = "no_llm"
    NO_RA = "no_ra"

    @classmethod
    def parse(cls, value: str | Variant) -> Variant:
        if isinstance(value, Variant):
            return value
        key = value.strip().lower().replace("-", "_").replace("w/o_", "no_").replace("w/o ", "no_")
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"unknown variant {value!r}; expected one of {[v.value for v in cls]}") from None


class AnalysisMode(str, Enum):
    FOREGROUND_PICOS = "FOREGROUND_PICOS"
    BACKGROUND_CONCEPTS = "BACKGROUND_CONCEPTS"


@dataclass(frozen=True)
class QuestionRecord:
    """A question with its ordered options; ``gold`` is for scoring only."""

    id: str
    text: str
    options: Mapping[str, str]
    gold: str | None = None

    def __post_init__(self) -> None:
        if not self.id or not self.text:
            raise SchemaError("question record needs non-empty id and question text")
        if len(self.options) < 2:
            raise SchemaError(f"question {self.id!r} needs at least two options")
        frame = make_frame(list(self.options))  # validates distinct labels
        if self.gold is not None and self.gold not in frame:
            raise SchemaError(f"question {self.id!r}: gold {self.gold!r} is not an option")

    @property
    def frame(self) -> Frame:
        return make_frame(list(self.options))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> QuestionRecord:
        try:
            qid = str(data["id"])
            text = data["question"]
        except KeyError as exc:
            raise SchemaError(f"dataset record missing field {exc.args[0]!r}") from None
        options = data.get("options", list(PUBMEDQA_OPTIONS))
        if isinstance(options, Mapping):
            opts = {str(k).strip(): str(v) for k, v in options.items()}
        elif isinstance(options, list):
            opts = {str(o).strip(): str(o).strip() for o in options}
        else:
            raise SchemaError(f"question {qid!r}: options must be a list or an object")
        gold = data.get("gold")
        return cls(qid, text, opts, None if gold is None else str(gold).strip())


def load_dataset(path: str | Path) -> list[QuestionRecord]:
    records = []
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, f"{path}: line {lineno}, column {exc.colno}") from None
            try:
                records.append(QuestionRecord.from_dict(data))
            except SchemaError as exc:
                raise SchemaError(f"{path}: line {lineno}: {exc}") from None
    return records


@dataclass(frozen=True)
class QuestionAnalysis:
    mode: AnalysisMode
    picos: Picos | None
    concepts: tuple[str, ...]
    core_keywords: tuple[str, ...]
    aux_keywords: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "picos": self.picos.to_dict() if self.picos else None,
            "concepts": list(self.concepts),
            "core_keywords": list(self.core_keywords),
            "aux_keywords": list(self.aux_keywords),
        }


@dataclass(frozen=True)
class NeuralOutput:
    answer_text: str
    parsed_label: str
    rationale: str
    confidence: float | None = None

    def to_dict(self) -> dict:
        return {
            "answer_text": self.answer_text,
            "parsed_label": self.parsed_label,
            "rationale": self.rationale,
            "confidence": self.confidence,
        }


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 5
    tau: float = 0.5
    variant: Variant = Variant.FULL
    seed: int = 0
    score_map: ScoreMap = field(default_factory=ScoreMap)
    thresholds: ArbitrationThresholds = field(default_factory=ArbitrationThresholds)
    arbitration_mode: str = "rule"

    def __post_init__(self) -> None:
        if not isinstance(self.k, int) or self.k < 1:
            raise ConfigurationError(f"k must be a positive integer, got {self.k!r}")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigurationError(f"tau must lie in [0, 1], got {self.tau}")
        if self.arbitration_mode not in ("rule", "prompt"):
            raise ConfigurationError("arbitration_mode must be 'rule' or 'prompt'")
        object.__setattr__(self, "variant", Variant.parse(self.variant))

    @property
    def fusion(self) -> FusionConfig:
        return FusionConfig(tau=self.tau)


@dataclass
class Clients:
    """The clients one run needs.  ``single_flight`` disables concurrency."""

    llm: TextClient
    retriever: RetrievalClient
    prompts: PromptLibrary = field(default_factory=PromptLibrary.default)
    single_flight: bool = False


@dataclass(frozen=True)
class PipelineResult:
    question_id: str
    variant: Variant
    analysis: QuestionAnalysis
    query: str
    evidence: tuple[EvidenceObject, ...]
    annotations: tuple[EvidenceAnnotation, ...]
    fusion: FusionResult
    fusion_skipped: bool
    neural: NeuralOutput
    arbitration: ArbitrationOutput
    final_answer: str
    degraded: tuple[str, ...] = ()

    @property
    def z_ds(self) -> str:
        return self.fusion.decision

    @property
    def z_llm(self) -> str:
        return self.neural.parsed_label

    def to_dict(self) -> dict:
        fusion = self.fusion.to_dict()
        fusion["skipped"] = self.fusion_skipped
        return {
            "question_id": self.question_id,
            "variant": self.variant.value,
            "final_answer": self.final_answer,
            "z_ds": self.z_ds,
            "z_llm": self.z_llm,
            "fusion": fusion,
            "neural": self.neural.to_dict(),
            "arbitration": self.arbitration.to_dict(),
            "analysis": self.analysis.to_dict(),
            "query": self.query,
            "evidence": [e.to_dict() for e in self.evidence],
            "annotations": [a.to_dict() for a in self.annotations],
            "degraded": list(self.degraded),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


class _Trace:
    def __init__(self) -> None:
        self.degraded: list[str] = []

    def note(self, what: str) -> None:
        self.degraded.append(what)


def _with_retry(
    call: Callable[[int], str], parse: Callable[[str], T | None], label: str
) -> T | None:
    """Run ``call(attempt)`` up to twice until ``parse`` accepts the text."""
    for attempt in range(2):
        try:
            text = call(attempt)
        except ClientError as exc:
            log.warning("%s: client error on attempt %d: %s", label, attempt + 1, exc)
            continue
        parsed = parse(text)
        if parsed is not None:
            return parsed
        log.warning("%s: unusable response on attempt %d", label, attempt + 1)
    return None


# ---------------------------------------------------------------- analysis

_STOPWORDS = frozenset(
    """a an and are as at be been being by can could did do does for from had has have how in into is it its
    of on or patients patient should than that the their there these this those to was were what when where
    which while who whom why will with would versus vs""".split()
)


def content_words(text: str) -> list[str]:
    seen: list[str] = []
    for word in re.findall(r"[A-Za-z0-9][A-Za-z0-9\-]*", text.lower()):
        if len(word) >= 3 and word not in _STOPWORDS and word not in seen:
            seen.append(word)
    return seen


def _str_list(value: Any) -> list[str]:
    if not isinstance(value, list):
        return []
    return [v.strip() for v in value if isinstance(v, str) and v.strip()]


def fallback_analysis(q: QuestionRecord) -> QuestionAnalysis:
    words = content_words(q.text)
    return QuestionAnalysis(AnalysisMode.BACKGROUND_CONCEPTS, None, tuple(words[:3]), tuple(words[:3]), tuple(words[3:8]))


def _parse_analysis(text: str, q: QuestionRecord) -> QuestionAnalysis | None:
    data = extract_json_object(text)
    if data is None:
        return None
    try:
        mode = AnalysisMode(str(data.get("mode", "")).strip().upper())
    except ValueError:
        return None
    picos = None
    if mode is AnalysisMode.FOREGROUND_PICOS and isinstance(data.get("picos"), Mapping):
        try:
            picos = Picos.from_mapping(data["picos"])
        except SchemaError:
            picos = None
    core = _str_list(data.get("core_keywords"))
    aux = _str_list(data.get("aux_keywords"))
    if not core:
        words = content_words(q.text)
        core, aux = words[:3], aux or words[3:8]
    return QuestionAnalysis(mode, picos, tuple(_str_list(data.get("concepts"))), tuple(core), tuple(aux))


def analyze_question(q: QuestionRecord, client: TextClient, prompts: PromptLibrary, trace: _Trace | None = None) -> QuestionAnalysis:
    prompt = prompts.render_analysis(q.text, q.options)
    result = _with_retry(
        lambda attempt: client.complete(prompt, stage="analyze", question_id=q.id, item_index=0, attempt=attempt),
        lambda text: _parse_analysis(text, q),
        f"analyze[{q.id}]",
    )
    if result is None:
        if trace:
            trace.note("analyze:fallback")
        return fallback_analysis(q)
    return result


def compose_query(core: Sequence[str], aux: Sequence[str] = ()) -> str:
    """``(c1 AND c2) AND (a1 OR a2)``; the auxiliary clause is omitted when empty."""
    core = [c.strip() for c in core if c and c.strip()]
    aux = [a.strip() for a in aux if a and a.strip()]
    if not core:
        raise UsageError("compose_query needs at least one core keyword")
    query = "(" + " AND ".join(core) + ")"
    if aux:
        query += " AND (" + " OR ".join(aux) + ")"
    return query


def retrieve(query: str, k: int, client: RetrievalClient, question_id: str = "", trace: _Trace | None = None) -> list[RawDocument]:
    if k < 1:
        raise UsageError("k must be at least 1")
    for attempt in range(2):
        try:
            docs = client.search(query, k, question_id=question_id, attempt=attempt)
        except ClientError as exc:
            log.warning("retrieve[%s]: attempt %d failed: %s", question_id, attempt + 1, exc)
            continue
        docs = [d for d in docs if d.text and d.text.strip()][:k]
        if len(docs) < k:
            log.info("retrieve[%s]: %d of %d documents", question_id, len(docs), k)
        return docs
    log.warning("retrieve[%s]: giving up, continuing with an empty evidence pool", question_id)
    if trace:
        trace.note("retrieve:empty")
    return []


# ---------------------------------------------------------------- evidence

def passthrough_evidence(doc: RawDocument, evidence_id: str | None = None) -> EvidenceObject:
    return EvidenceObject(id=evidence_id or doc.id, snippet=doc.text.strip(), source_meta=doc.title)


def _parse_structure(text: str, doc: RawDocument, evidence_id: str) -> EvidenceObject | None:
    data = extract_json_object(text)
    if data is None:
        return None
    try:
        picos = Picos.from_mapping(data.get("picos") if isinstance(data.get("picos"), Mapping) else None)
    except SchemaError:
        return None
    snippet = data.get("snippet")
    if not isinstance(snippet, str) or not snippet.strip():
        snippet = doc.text
    return EvidenceObject(
        id=evidence_id,
        snippet=snippet.strip(),
        picos=picos,
        core_concepts=tuple(_str_list(data.get("core_concepts"))),
        source_meta=doc.title,
    )


def structure_evidence(
    doc: RawDocument,
    q: QuestionRecord,
    client: TextClient,
    prompts: PromptLibrary,
    item_index: int = 0,
    variant: Variant = Variant.FULL,
    evidence_id: str | None = None,
    trace: _Trace | None = None,
) -> EvidenceObject:
    evidence_id = evidence_id or doc.id
    if variant is Variant.NO_SEP:
        return passthrough_evidence(doc, evidence_id)
    prompt = prompts.render_structure(q.text, doc.text)
    result = _with_retry(
        lambda attempt: client.complete(prompt, stage="structure", question_id=q.id, item_index=item_index, attempt=attempt),
        lambda text: _parse_structure(text, doc, evidence_id),
        f"structure[{q.id}/{item_index}]",
    )
    if result is None:
        if trace:
            trace.note(f"structure[{item_index}]:passthrough")
        return passthrough_evidence(doc, evidence_id)
    return result


NO_ET_LABELS = {"quality": Quality.COHORT.value, "relevance": Relevance.MEDIUM.value, "support": Support.MODERATE.value}


def annotate_evidence(
    obj: EvidenceObject,
    q: QuestionRecord,
    frame: Frame,
    client: TextClient,
    prompts: PromptLibrary,
    item_index: int = 0,
    variant: Variant = Variant.FULL,
    trace: _Trace | None = None,
) -> EvidenceAnnotation:
    if variant is Variant.NO_ET:
        stage = "annotate_support"
        prompt = prompts.render_support_only(q.text, q.options, obj)

        def parse(text: str) -> EvidenceAnnotation | None:
            data = extract_json_object(text)
            if data is None or "hypothesis" not in data:
                return None
            return sanitize_annotation({**NO_ET_LABELS, "evidence_id": obj.id, "hypothesis": data["hypothesis"]}, frame)

    else:
        stage = "annotate"
        prompt = prompts.render_annotation(q.text, q.options, obj)

        def parse(text: str) -> EvidenceAnnotation | None:
            data = extract_json_object(text)
            if data is None:
                return None
            # the evidence id is ours, never the model's
            return sanitize_annotation({**data, "evidence_id": obj.id}, frame)

    result = _with_retry(
        lambda attempt: client.complete(prompt, stage=stage, question_id=q.id, item_index=item_index, attempt=attempt),
        parse,
        f"{stage}[{q.id}/{item_index}]",
    )
    if result is None:
        if trace:
            trace.note(f"{stage}[{item_index}]:non-informative")
        return EvidenceAnnotation.lowest(obj.id)
    return result


# ---------------------------------------------------------------- neural path

def parse_label(text: str, frame: Frame, option_texts: Mapping[str, str] | None = None) -> str:
    """Map free text to a frame label, or INVALID.

    Tiers: the whole answer is a label; an explicit form such as
    ``answer is B`` or ``(B)``; a unique whole-word mention of a label or its
    option text.
    """
    option_texts = option_texts or {}
    if not text or not text.strip():
        return INVALID
    bare = text.strip().strip("\"'`*").strip().rstrip(".,;:!").strip()
    bare = re.sub(r"^\(\s*(.*?)\s*\)$", r"\1", bare)
    if bare in frame:
        return frame.labels[frame.index(bare)]
    folded = [lab for lab in frame.labels if lab.lower() == bare.lower()]
    if len(folded) == 1:
        return folded[0]
    explicit = [lab for lab in frame.labels if explicit_mention(text, lab)]
    if len(explicit) == 1:
        return explicit[0]
    mentioned = [
        lab
        for lab in frame.labels
        if re.search(rf"(?<!\w){re.escape(lab)}(?!\w)", text, re.IGNORECASE if len(lab) >= 3 else 0)
        or (option_texts.get(lab, lab) != lab and option_texts[lab].strip().lower() in text.lower())
    ]
    if len(mentioned) == 1:
        return mentioned[0]
    return INVALID


def _parse_confidence(value: Any) -> float | None:
    try:
        conf = float(value)
    except (TypeError, ValueError):
        return None
    if conf != conf:  # NaN
        return None
    if conf > 1.0 and conf <= 100.0:
        conf /= 100.0
    return min(max(conf, 0.0), 1.0)


def _parse_neural(text: str, frame: Frame, option_texts: Mapping[str, str]) -> NeuralOutput:
    data = extract_json_object(text)
    if data is not None and "answer" in data:
        answer = str(data.get("answer", ""))
        rationale = data.get("rationale") if isinstance(data.get("rationale"), str) else ""
        return NeuralOutput(answer, parse_label(answer, frame, option_texts), rationale, _parse_confidence(data.get("confidence")))
    return NeuralOutput(text, parse_label(text, frame, option_texts), text, None)


def neural_infer(
    q: QuestionRecord,
    frame: Frame,
    evidence: Sequence[EvidenceObject],
    client: TextClient,
    prompts: PromptLibrary,
    trace: _Trace | None = None,
) -> NeuralOutput:
    prompt = prompts.render_neural(q.text, q.options, evidence)
    text = _with_retry(
        lambda attempt: client.complete(prompt, stage="neural", question_id=q.id, item_index=0, attempt=attempt),
        lambda t: t,
        f"neural[{q.id}]",
    )
    if text is None:
        if trace:
            trace.note("neural:invalid")
        return NeuralOutput("", INVALID, "", None)
    return _parse_neural(text, frame, q.options)


SKIPPED_NEURAL = NeuralOutput("", INVALID, "", None)


# ---------------------------------------------------------------- orchestration

def _unique_ids(docs: Sequence[RawDocument]) -> list[str]:
    ids: list[str] = []
    for i, doc in enumerate(docs):
        ids.append(doc.id if doc.id not in ids else f"{doc.id}#{i}")
    return ids


def run_question(q: QuestionRecord, config: PipelineConfig, clients: Clients) -> PipelineResult:
    """Run one question through the configured variant; never raises on degraded stages."""
    trace = _Trace()
    frame = q.frame
    variant = config.variant
    prompts = clients.prompts

    analysis = analyze_question(q, clients.llm, prompts, trace)
    query = compose_query(analysis.core_keywords, analysis.aux_keywords)
    docs = retrieve(query, config.k, clients.retriever, q.id, trace)
    evidence = tuple(
        structure_evidence(doc, q, clients.llm, prompts, i, variant, eid, trace)
        for i, (doc, eid) in enumerate(zip(docs, _unique_ids(docs)))
    )

    if variant is Variant.NO_DS:
        annotations: tuple[EvidenceAnnotation, ...] = ()
        fusion = FusionResult.vacuous(frame)
    else:
        annotations = tuple(
            annotate_evidence(obj, q, frame, clients.llm, prompts, i, variant, trace) for i, obj in enumerate(evidence)
        )
        fusion = fuse_evidence(annotations, frame, config.score_map, config.fusion)

    neural = SKIPPED_NEURAL if variant is Variant.NO_LLM else neural_infer(q, frame, evidence, clients.llm, prompts, trace)

    if variant is Variant.NO_DS:
        # fusion is skipped; the neural answer is final
        if neural.parsed_label != INVALID:
            arb = ArbitrationOutput(neural.parsed_label, ReliabilityStatus.LOW, "Neural path only.", DominantPath.NEURAL)
        else:
            trace.note("final:first-option")
            arb = ArbitrationOutput(frame.labels[0], ReliabilityStatus.LOW, "Neural output invalid; first option.", DominantPath.NEURAL)
    elif variant is Variant.NO_LLM:
        if fusion.decision != UNCERTAIN:
            arb = ArbitrationOutput(fusion.decision, ReliabilityStatus.MODERATE, "Symbolic path only.", DominantPath.SYMBOLIC)
        else:
            arb = ArbitrationOutput(
                argmax_label(fusion.belief_vector, frame),
                ReliabilityStatus.LOW,
                "Symbolic path abstained; highest belief (first option when vacuous).",
                DominantPath.SYMBOLIC,
            )
    else:
        inp = ArbitrationInput(
            question=q.text,
            frame=frame,
            evidence=evidence,
            z_ds=fusion.decision,
            belief_vector=fusion.belief_vector,
            uncertainty=fusion.uncertainty,
            aggregate_reliability=fusion.aggregate_reliability,
            z_llm=neural.parsed_label,
            llm_rationale=neural.rationale,
            llm_confidence=neural.confidence,
            option_texts=q.options,
        )
        if variant is Variant.NO_RA:
            arb = select_by_confidence(inp)
        elif config.arbitration_mode == "prompt":
            arb = arbitrate_llm(inp, clients.llm, config.thresholds, question_id=q.id, prompts=prompts)
        else:
            arb = arbitrate_rule_based(inp, config.thresholds)

    return PipelineResult(
        question_id=q.id,
        variant=variant,
        analysis=analysis,
        query=query,
        evidence=evidence,
        annotations=annotations,
        fusion=fusion,
        fusion_skipped=variant is Variant.NO_DS,
        neural=neural,
        arbitration=arb,
        final_answer=arb.answer,
        degraded=tuple(trace.degraded),
    )


def run_dataset(
    records: Iterable[QuestionRecord], config: PipelineConfig, clients: Clients, concurrency: int = 1
) -> list[PipelineResult]:
    """Run every record; results come back in input order."""
    records = list(records)
    workers = 1 if clients.single_flight else max(1, concurrency)
    if workers == 1:
        return [run_question(q, config, clients) for q in records]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda q: run_question(q, config, clients), records))


def fixture_gaps(store: ReplayStore, records: Iterable[QuestionRecord], k: int, variant: Variant = Variant.FULL) -> list[str]:
    """Fixture keys a replay run at depth ``k`` would need but cannot find."""
    gaps = []
    for q in records:
        if not store.has("retrieve", q.id, 0):
            gaps.append(f"retrieve/{q.id}/0")
            continue
        n_docs = 0
        malformed = False
        for attempt in range(2):
            try:
                n_docs = len(json.loads(store.get("retrieve", q.id, 0, attempt)))
                break
            except ClientError:
                # a scripted failure; if both attempts fail the pool is empty
                continue
            except (ValueError, TypeError):
                malformed = True
                break
        if malformed:
            gaps.append(f"retrieve/{q.id}/0")
            continue
        stages = []
        if variant is not Variant.NO_SEP:
            stages.append("structure")
        if variant is Variant.NO_ET:
            stages.append("annotate_support")
        elif variant is not Variant.NO_DS:
            stages.append("annotate")
        for i in range(min(k, n_docs)):
            gaps.extend(f"{s}/{q.id}/{i}" for s in stages if not store.has(s, q.id, i))
        if variant is not Variant.NO_LLM and not store.has("neural", q.id, 0):
            gaps.append(f"neural/{q.id}/0")
    return gaps
