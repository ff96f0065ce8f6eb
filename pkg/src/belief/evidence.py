"""Structured evidence objects, ordinal annotations and score mapping."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

from .errors import ConfigurationError, ParseError, SchemaError
from .frame import Frame

PICOS_FIELDS = ("population", "intervention", "comparison", "outcome", "study_design")
DEFAULT_EPSILON = 1e-8


# Scales are declared best-first; the last member is the floor used by sanitization.
class Quality(str, Enum):
    """Evidence quality, strongest design first."""

    SYSTEMATIC_REVIEW_META = "SYSTEMATIC_REVIEW_META"
    RCT = "RCT"
    COHORT = "COHORT"
    CASE_CONTROL = "CASE_CONTROL"
    CASE_REPORT = "CASE_REPORT"
    UNCLEAR_BASIC = "UNCLEAR_BASIC"


class Relevance(str, Enum):
    HIGH = "HIGH"
    MEDIUM = "MEDIUM"
    LOW = "LOW"
    IRRELEVANT = "IRRELEVANT"


class Support(str, Enum):
    STRONG = "STRONG"
    MODERATE = "MODERATE"
    WEAK = "WEAK"
    NONE = "NONE"


@dataclass(frozen=True)
class Picos:
    population: str | None = None
    intervention: str | None = None
    comparison: str | None = None
    outcome: str | None = None
    study_design: str | None = None

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any] | None) -> Picos:
        if not data:
            return cls()
        values = {}
        for name in PICOS_FIELDS:
            value = data.get(name)
            if value is not None and not isinstance(value, str):
                raise SchemaError(f"picos.{name} must be a string or null")
            # unavailable fields stay empty, never fabricated
            values[name] = value.strip() if value and value.strip() else None
        return cls(**values)

    def to_dict(self) -> dict[str, str | None]:
        return {name: getattr(self, name) for name in PICOS_FIELDS}

    @property
    def is_empty(self) -> bool:
        return all(getattr(self, name) is None for name in PICOS_FIELDS)


@dataclass(frozen=True)
class EvidenceObject:
    """One retrieved document after structuring: snippet, PICOS and concepts."""

    id: str
    snippet: str
    picos: Picos = field(default_factory=Picos)
    core_concepts: tuple[str, ...] = ()
    source_meta: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise SchemaError("evidence id must be a non-empty string")
        if not isinstance(self.snippet, str) or not self.snippet.strip():
            raise SchemaError(f"evidence {self.id!r}: snippet must be non-empty")
        object.__setattr__(self, "core_concepts", tuple(self.core_concepts))

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "snippet": self.snippet,
            "picos": self.picos.to_dict(),
            "core_concepts": list(self.core_concepts),
            "source_meta": self.source_meta,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> EvidenceObject:
        if not isinstance(data, Mapping):
            raise SchemaError("evidence record must be a JSON object")
        for name in ("id", "snippet"):
            if name not in data:
                raise SchemaError(f"evidence record missing field {name!r}")
            if not isinstance(data[name], str):
                raise SchemaError(f"evidence field {name!r} must be a string")
        concepts = data.get("core_concepts") or []
        if not isinstance(concepts, list) or not all(isinstance(c, str) for c in concepts):
            raise SchemaError("evidence field 'core_concepts' must be a list of strings")
        meta = data.get("source_meta")
        if meta is not None and not isinstance(meta, str):
            raise SchemaError("evidence field 'source_meta' must be a string or null")
        picos = data.get("picos")
        if picos is not None and not isinstance(picos, Mapping):
            raise SchemaError("evidence field 'picos' must be an object or null")
        return cls(
            id=data["id"],
            snippet=data["snippet"],
            picos=Picos.from_mapping(picos),
            core_concepts=tuple(concepts),
            source_meta=meta,
        )


def parse_evidence_set(json_text: str) -> list[EvidenceObject]:
    """Parse a JSON array of evidence records; ids must be unique."""
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
    if not isinstance(data, list):
        raise SchemaError("evidence set must be a JSON array")
    objects = []
    seen: set[str] = set()
    for i, record in enumerate(data):
        try:
            obj = EvidenceObject.from_dict(record)
        except SchemaError as exc:
            raise SchemaError(f"evidence[{i}]: {exc}") from None
        if obj.id in seen:
            raise SchemaError(f"duplicate evidence id {obj.id!r}")
        seen.add(obj.id)
        objects.append(obj)
    return objects


@dataclass(frozen=True)
class EvidenceAnnotation:
    """Ordinal labels for one evidence item; ``hypothesis`` is None for NONE."""

    evidence_id: str
    quality: Quality
    relevance: Relevance
    support: Support
    hypothesis: str | None

    def to_dict(self) -> dict[str, str]:
        return {
            "evidence_id": self.evidence_id,
            "quality": self.quality.value,
            "relevance": self.relevance.value,
            "support": self.support.value,
            "hypothesis": self.hypothesis if self.hypothesis is not None else "NONE",
        }

    @classmethod
    def lowest(cls, evidence_id: str) -> EvidenceAnnotation:
        """The non-informative annotation used when annotation fails."""
        return cls(evidence_id, Quality.UNCLEAR_BASIC, Relevance.IRRELEVANT, Support.NONE, None)


def _coerce(scale: type[Enum], value: Any) -> Enum:
    members = list(scale)
    if isinstance(value, scale):
        return value
    if isinstance(value, str):
        key = value.strip().upper()
        try:
            return scale(key)
        except ValueError:
            pass
    return members[-1]


def sanitize_annotation(raw: Mapping[str, Any], frame: Frame) -> EvidenceAnnotation:
    """Map missing or unrecognized fields to the lowest label of their scale.

    A hypothesis outside the frame becomes NONE, and support is forced to
    NONE when there is no hypothesis to support.
    """
    evidence_id = raw.get("evidence_id", raw.get("id"))
    if not isinstance(evidence_id, str) or not evidence_id:
        raise SchemaError("annotation record missing 'evidence_id'")
    quality = _coerce(Quality, raw.get("quality"))
    relevance = _coerce(Relevance, raw.get("relevance"))
    support = _coerce(Support, raw.get("support"))
    hypothesis = raw.get("hypothesis")
    if isinstance(hypothesis, str) and hypothesis.strip() in frame:
        hypothesis = hypothesis.strip()
    else:
        hypothesis = None
    if hypothesis is None:
        support = Support.NONE
    return EvidenceAnnotation(evidence_id, quality, relevance, support, hypothesis)


def parse_annotations(json_text: str, frame: Frame) -> list[EvidenceAnnotation]:
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
    if not isinstance(data, list) or not all(isinstance(r, Mapping) for r in data):
        raise SchemaError("annotations must be a JSON array of objects")
    return [sanitize_annotation(record, frame) for record in data]


@dataclass(frozen=True)
class EvidenceScores:
    R: float
    r_prime: float
    D: float
    W: float


DEFAULT_QUALITY_SCORES = {
    Quality.SYSTEMATIC_REVIEW_META: 1.0,
    Quality.RCT: 0.9,
    Quality.COHORT: 0.75,
    Quality.CASE_CONTROL: 0.6,
    Quality.CASE_REPORT: 0.45,
    Quality.UNCLEAR_BASIC: 0.3,
}
DEFAULT_RELEVANCE_SCORES = {
    Relevance.HIGH: 1.0,
    Relevance.MEDIUM: 0.7,
    Relevance.LOW: 0.4,
    Relevance.IRRELEVANT: 0.0,
}
DEFAULT_SUPPORT_SCORES = {
    Support.STRONG: 0.9,
    Support.MODERATE: 0.6,
    Support.WEAK: 0.3,
    Support.NONE: 0.0,
}


@dataclass(frozen=True)
class ScoreMap:
    """Fixed mapping from ordinal labels to numeric scores.

    Each scale must be non-increasing from its best label to its floor, and
    IRRELEVANT and NONE must map to exactly zero.
    """

    quality_scores: Mapping[Quality, float] = field(default_factory=lambda: dict(DEFAULT_QUALITY_SCORES))
    relevance_scores: Mapping[Relevance, float] = field(default_factory=lambda: dict(DEFAULT_RELEVANCE_SCORES))
    support_scores: Mapping[Support, float] = field(default_factory=lambda: dict(DEFAULT_SUPPORT_SCORES))
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        for name, scale, table in (
            ("quality", Quality, self.quality_scores),
            ("relevance", Relevance, self.relevance_scores),
            ("support", Support, self.support_scores),
        ):
            values = []
            for member in scale:
                if member not in table:
                    raise ConfigurationError(f"score map lacks {name} label {member.value}")
                value = float(table[member])
                if not 0.0 <= value <= 1.0:
                    raise ConfigurationError(f"{name} score for {member.value} outside [0, 1]: {value}")
                values.append(value)
            if any(a < b for a, b in zip(values, values[1:])):
                raise ConfigurationError(f"{name} scores are not monotone along the ordinal scale")
        if self.relevance_scores[Relevance.IRRELEVANT] != 0.0:
            raise ConfigurationError("IRRELEVANT must score exactly 0")
        if self.support_scores[Support.NONE] != 0.0:
            raise ConfigurationError("support NONE must score exactly 0")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ConfigurationError("epsilon must be a positive finite number")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ScoreMap:
        def table(scale: type[Enum], key: str) -> dict:
            entries = data.get(key)
            if not isinstance(entries, Mapping):
                raise ConfigurationError(f"score map needs an object {key!r}")
            out = {}
            for label, value in entries.items():
                try:
                    out[scale(label.strip().upper())] = float(value)
                except (ValueError, AttributeError, TypeError):
                    raise ConfigurationError(f"bad {key} entry {label!r}: {value!r}") from None
            return out

        return cls(
            quality_scores=table(Quality, "quality"),
            relevance_scores=table(Relevance, "relevance"),
            support_scores=table(Support, "support"),
            epsilon=float(data.get("epsilon", DEFAULT_EPSILON)),
        )

    @classmethod
    def load(cls, path: str | Path) -> ScoreMap:
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, f"{path}: line {exc.lineno}, column {exc.colno}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return {
            "quality": {k.value: v for k, v in self.quality_scores.items()},
            "relevance": {k.value: v for k, v in self.relevance_scores.items()},
            "support": {k.value: v for k, v in self.support_scores.items()},
            "epsilon": self.epsilon,
        }


def score_evidence(ann: EvidenceAnnotation, score_map: ScoreMap) -> EvidenceScores:
    try:
        R = float(score_map.quality_scores[ann.quality])
        r_prime = float(score_map.relevance_scores[ann.relevance])
        D = float(score_map.support_scores[ann.support])
    except KeyError as exc:
        raise ConfigurationError(f"score map has no entry for {exc.args[0]!r}") from None
    return EvidenceScores(R=R, r_prime=r_prime, D=D, W=R * r_prime)


def aggregate_reliability(scores: Sequence[EvidenceScores], epsilon: float = DEFAULT_EPSILON) -> float:
    """Relevance-weighted mean source quality of an evidence set."""
    if not scores:
        return 0.0
    numerator = math.fsum(s.r_prime * s.R for s in scores)
    denominator = math.fsum(s.r_prime for s in scores) + epsilon
    return numerator / denominator

