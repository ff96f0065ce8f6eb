"""Reliability-aware arbitration between the symbolic and neural paths."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .errors import ClientError, ConfigurationError
from .evidence import EvidenceObject
from .frame import Frame
from .fusion import UNCERTAIN

log = logging.getLogger(__name__)

INVALID = "invalid"
DEFAULT_LLM_CONFIDENCE = 0.5
FALLBACK_NOTICE = "[fallback: rule-based arbitration]"


class ReliabilityStatus(str, Enum):
    HIGH = "HIGH"
    MODERATE = "MODERATE"
    LOW = "LOW"


class DominantPath(str, Enum):
    SYMBOLIC = "SYMBOLIC"
    NEURAL = "NEURAL"
    AGREEMENT = "AGREEMENT"


@dataclass(frozen=True)
class ArbitrationThresholds:
    belief_floor: float = 0.5
    uncertainty_ceiling: float = 0.55
    reliability_floor: float = 0.5

    def __post_init__(self) -> None:
        for name in ("belief_floor", "uncertainty_ceiling", "reliability_floor"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class ArbitrationInput:
    """The signal package handed to the arbiter.

    ``option_texts`` maps labels to their answer text (e.g. ``"A"`` to
    ``"Avoid bupropion"``) and is used for the consistency check.
    """

    question: str
    frame: Frame
    evidence: Sequence[EvidenceObject]
    z_ds: str
    belief_vector: Sequence[float]
    uncertainty: float
    aggregate_reliability: float
    z_llm: str
    llm_rationale: str = ""
    llm_confidence: float | None = None
    option_texts: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.belief_vector) != len(self.frame):
            raise ConfigurationError("belief vector length must equal frame size")
        if not 0.0 <= self.uncertainty <= 1.0 + 1e-9:
            raise ConfigurationError(f"uncertainty outside [0, 1]: {self.uncertainty}")
        if self.z_ds != UNCERTAIN and self.z_ds not in self.frame:
            raise ConfigurationError(f"z_ds {self.z_ds!r} is neither a label nor uncertain")
        if self.z_llm != INVALID and self.z_llm not in self.frame:
            raise ConfigurationError(f"z_llm {self.z_llm!r} is neither a label nor invalid")

    @property
    def max_belief(self) -> float:
        return max(self.belief_vector, default=0.0)

    @property
    def confidence(self) -> float:
        return DEFAULT_LLM_CONFIDENCE if self.llm_confidence is None else self.llm_confidence


@dataclass(frozen=True)
class ArbitrationOutput:
    answer: str
    reliability_status: ReliabilityStatus
    rationale: str
    dominant_path: DominantPath

    def to_dict(self) -> dict:
        return {
            "answer": self.answer,
            "reliability_status": self.reliability_status.value,
            "dominant_path": self.dominant_path.value,
            "rationale": self.rationale,
        }


def argmax_label(belief_vector: Sequence[float], frame: Frame) -> str:
    """Lowest-index argmax; the first label when nothing has belief."""
    best = 0
    for j in range(1, len(belief_vector)):
        if belief_vector[j] > belief_vector[best]:
            best = j
    return frame.labels[best]


def mentions_option(text: str, label: str, option_text: str | None = None) -> bool:
    """Whether ``text`` names the option by its label or its answer text.

    Long labels (``yes``, ``maybe``) match as whole words.  One- and
    two-character labels only count in explicit forms such as ``(B)``,
    ``option B`` or ``answer is B`` since a bare ``a`` is usually an article.
    """
    if not text:
        return False
    if option_text and option_text.strip() and option_text.strip().lower() in text.lower():
        return True
    if len(label.strip()) >= 3:
        return re.search(rf"(?<!\w){re.escape(label.strip())}(?!\w)", text, re.IGNORECASE) is not None
    return explicit_mention(text, label)


def explicit_mention(text: str, label: str) -> bool:
    """``(B)``, ``option B``, ``answer is B`` or a line starting ``B)``."""
    esc = re.escape(label.strip())
    patterns = (
        rf"\(\s*{esc}\s*\)",
        rf"\b(?:option|choice|answer)\s*(?:is\s*)?:?\s*{esc}(?!\w)",
        rf"^\s*{esc}\s*[).:]",
    )
    return any(re.search(p, text, re.IGNORECASE | re.MULTILINE) for p in patterns)


def _assess(inp: ArbitrationInput, th: ArbitrationThresholds) -> tuple[bool, bool, bool]:
    symbolic_trusted = (
        inp.z_ds != UNCERTAIN
        and inp.max_belief >= th.belief_floor
        and inp.uncertainty <= th.uncertainty_ceiling
        and inp.aggregate_reliability >= th.reliability_floor
    )
    neural_valid = inp.z_llm != INVALID
    neural_consistent = neural_valid and mentions_option(
        inp.llm_rationale, inp.z_llm, inp.option_texts.get(inp.z_llm)
    )
    return symbolic_trusted, neural_valid, neural_consistent


def _signals(inp: ArbitrationInput) -> str:
    return f"max Bel={inp.max_belief:.3f}, m(Theta)={inp.uncertainty:.3f}, W={inp.aggregate_reliability:.3f}"


def arbitrate_rule_based(inp: ArbitrationInput, th: ArbitrationThresholds = ArbitrationThresholds()) -> ArbitrationOutput:
    """Deterministic three-stage arbitration; always commits to a label."""
    trusted, valid, consistent = _assess(inp, th)
    signals = _signals(inp)

    if valid and inp.z_ds == inp.z_llm:
        return ArbitrationOutput(
            inp.z_ds, ReliabilityStatus.HIGH, f"Both paths select {inp.z_ds} ({signals}).", DominantPath.AGREEMENT
        )
    if trusted and not (valid and consistent):
        why = "neural output invalid" if not valid else f"neural rationale does not support {inp.z_llm}"
        return ArbitrationOutput(
            inp.z_ds,
            ReliabilityStatus.MODERATE,
            f"Symbolic evidence is reliable ({signals}); {why}.",
            DominantPath.SYMBOLIC,
        )
    if not trusted and valid:
        status = ReliabilityStatus.MODERATE if consistent else ReliabilityStatus.LOW
        note = "consistent" if consistent else "not clearly grounded"
        return ArbitrationOutput(
            inp.z_llm,
            status,
            f"Symbolic evidence insufficient ({signals}); deferring to neural answer, rationale {note}.",
            DominantPath.NEURAL,
        )
    if trusted and valid:
        # both usable but disagree; ties go to the neural path
        if inp.max_belief > inp.confidence:
            return ArbitrationOutput(
                inp.z_ds,
                ReliabilityStatus.LOW,
                f"Paths disagree; symbolic belief {inp.max_belief:.3f} exceeds neural confidence {inp.confidence:.3f}.",
                DominantPath.SYMBOLIC,
            )
        return ArbitrationOutput(
            inp.z_llm,
            ReliabilityStatus.LOW,
            f"Paths disagree; neural confidence {inp.confidence:.3f} is at least symbolic belief {inp.max_belief:.3f}.",
            DominantPath.NEURAL,
        )
    return ArbitrationOutput(
        argmax_label(inp.belief_vector, inp.frame),
        ReliabilityStatus.LOW,
        f"Neither path is usable ({signals}); falling back to the highest belief.",
        DominantPath.SYMBOLIC,
    )


def select_by_confidence(inp: ArbitrationInput) -> ArbitrationOutput:
    """Confidence-only path selection (the ablation without arbitration)."""
    symbolic = 0.0 if inp.z_ds == UNCERTAIN else inp.max_belief
    if inp.z_llm != INVALID and inp.confidence >= symbolic:
        return ArbitrationOutput(
            inp.z_llm,
            ReliabilityStatus.LOW,
            f"Neural confidence {inp.confidence:.3f} >= symbolic {symbolic:.3f}.",
            DominantPath.NEURAL,
        )
    answer = inp.z_ds if inp.z_ds != UNCERTAIN else argmax_label(inp.belief_vector, inp.frame)
    return ArbitrationOutput(
        answer,
        ReliabilityStatus.LOW,
        f"Symbolic belief {symbolic:.3f} > neural confidence {inp.confidence:.3f}.",
        DominantPath.SYMBOLIC,
    )


def parse_arbitration_response(text: str, frame: Frame) -> ArbitrationOutput | None:
    """Validate the constrained JSON an arbitration model returns."""
    data = extract_json_object(text)
    if data is None:
        return None
    answer = data.get("answer")
    if not isinstance(answer, str) or answer.strip() not in frame:
        return None
    try:
        status = ReliabilityStatus(str(data.get("reliability_status", "")).strip().upper())
        path = DominantPath(str(data.get("dominant_path", "")).strip().upper())
    except ValueError:
        return None
    rationale = data.get("rationale")
    if not isinstance(rationale, str):
        return None
    return ArbitrationOutput(answer.strip(), status, rationale, path)


def extract_json_object(text: str) -> dict | None:
    """First JSON object in ``text``, tolerating code fences and chatter."""
    if not isinstance(text, str):
        return None
    decoder = json.JSONDecoder()
    for match in re.finditer(r"\{", text):
        try:
            obj, _ = decoder.raw_decode(text, match.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def arbitrate_llm(
    inp: ArbitrationInput,
    client,
    th: ArbitrationThresholds = ArbitrationThresholds(),
    *,
    question_id: str = "",
    prompts=None,
) -> ArbitrationOutput:
    """Prompt-mediated arbitration with one retry and a rule-based fallback."""
    from .prompts import PromptLibrary

    prompts = prompts or PromptLibrary.default()
    prompt = prompts.render_arbitration(inp)
    for attempt in range(2):
        try:
            text = client.complete(prompt, stage="arbitrate", question_id=question_id, item_index=0, attempt=attempt)
        except ClientError as exc:
            log.warning("arbitration client failed (attempt %d): %s", attempt + 1, exc)
            continue
        out = parse_arbitration_response(text, inp.frame)
        if out is not None:
            return out
        log.warning("arbitration response rejected (attempt %d)", attempt + 1)
    fallback = arbitrate_rule_based(inp, th)
    return ArbitrationOutput(
        fallback.answer,
        fallback.reliability_status,
        f"{FALLBACK_NOTICE} {fallback.rationale}",
        fallback.dominant_path,
    )
