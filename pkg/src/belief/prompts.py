"""Versioned prompt templates with named ``$placeholders``.

Templates live in ``belief/prompts/*.txt``.  Lines starting with ``##`` are
header metadata (name, version) and are stripped before rendering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from string import Template
from typing import TYPE_CHECKING, Mapping, Sequence

from .evidence import EvidenceObject

if TYPE_CHECKING:
    from .arbitration import ArbitrationInput

STAGES = ("analyze", "structure", "annotate", "annotate_support", "neural", "arbitrate")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    version: str
    template: Template

    @classmethod
    def parse(cls, name: str, text: str) -> PromptTemplate:
        meta = {}
        body = []
        for line in text.splitlines():
            if line.startswith("##"):
                key, _, value = line[2:].partition(":")
                meta[key.strip()] = value.strip()
            else:
                body.append(line)
        return cls(meta.get("template", name), meta.get("version", "0"), Template("\n".join(body).strip() + "\n"))

    def render(self, **fields: str) -> str:
        # substitute() raises on a missing placeholder, which is what we want
        return self.template.substitute(fields)


def format_options(options: Mapping[str, str]) -> str:
    lines = []
    for label, text in options.items():
        lines.append(f"{label}. {text}" if text and text != label else label)
    return "\n".join(lines)


def format_evidence(evidence: Sequence[EvidenceObject]) -> str:
    if not evidence:
        return "(no evidence retrieved)"
    return "\n".join(format_evidence_item(obj, i + 1) for i, obj in enumerate(evidence))


def format_evidence_item(obj: EvidenceObject, number: int | None = None) -> str:
    head = f"[{number}] " if number is not None else ""
    picos = {k: v for k, v in obj.picos.to_dict().items() if v}
    parts = [f"{head}Snippet: {obj.snippet}"]
    if picos:
        parts.append("    PICOS: " + "; ".join(f"{k}={v}" for k, v in picos.items()))
    if obj.core_concepts:
        parts.append("    Concepts: " + ", ".join(obj.core_concepts))
    return "\n".join(parts)


class PromptLibrary:
    """Loads one template per pipeline stage and renders them."""

    def __init__(self, templates: Mapping[str, PromptTemplate]) -> None:
        missing = [s for s in STAGES if s not in templates]
        if missing:
            raise ValueError(f"prompt library lacks templates for {missing}")
        self.templates = dict(templates)

    @classmethod
    def default(cls) -> PromptLibrary:
        root = resources.files("belief") / "prompts"
        return cls({s: PromptTemplate.parse(s, (root / f"{s}.txt").read_text(encoding="utf-8")) for s in STAGES})

    @classmethod
    def from_directory(cls, path: str | Path) -> PromptLibrary:
        path = Path(path)
        return cls({s: PromptTemplate.parse(s, (path / f"{s}.txt").read_text(encoding="utf-8")) for s in STAGES})

    def versions(self) -> dict[str, str]:
        return {name: t.version for name, t in self.templates.items()}

    def render_analysis(self, question: str, options: Mapping[str, str]) -> str:
        return self.templates["analyze"].render(question=question, options=format_options(options))

    def render_structure(self, question: str, document: str) -> str:
        return self.templates["structure"].render(question=question, document=document)

    def render_annotation(self, question: str, options: Mapping[str, str], obj: EvidenceObject) -> str:
        return self.templates["annotate"].render(
            question=question, options=format_options(options), evidence=format_evidence_item(obj)
        )

    def render_support_only(self, question: str, options: Mapping[str, str], obj: EvidenceObject) -> str:
        return self.templates["annotate_support"].render(
            question=question, options=format_options(options), evidence=format_evidence_item(obj)
        )

    def render_neural(self, question: str, options: Mapping[str, str], evidence: Sequence[EvidenceObject]) -> str:
        return self.templates["neural"].render(
            question=question, options=format_options(options), evidence=format_evidence(evidence)
        )

    def render_arbitration(self, inp: ArbitrationInput) -> str:
        options = {label: inp.option_texts.get(label, label) for label in inp.frame.labels}
        belief = json.dumps({label: round(b, 6) for label, b in zip(inp.frame.labels, inp.belief_vector)})
        return self.templates["arbitrate"].render(
            question=inp.question,
            options=format_options(options),
            evidence=format_evidence(inp.evidence),
            z_ds=inp.z_ds,
            belief=belief,
            uncertainty=f"{inp.uncertainty:.6f}",
            reliability=f"{inp.aggregate_reliability:.6f}",
            z_llm=inp.z_llm,
            rationale=inp.llm_rationale or "(none)",
            confidence="(not reported)" if inp.llm_confidence is None else f"{inp.llm_confidence:.3f}",
        )
