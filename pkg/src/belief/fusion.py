"""Restricted BPAs, Dempster combination, belief and abstention.

Every evidence item contributes mass to a single hypothesis and to the whole
frame.  Folding such BPAs keeps at most ``L + 1`` focal elements, so the hot
path works on a dense vector of singleton masses instead of the power set.
:func:`combine_general` is the full power-set rule and serves as the oracle.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

from .errors import CapacityError, ConfigurationError, TotalConflictError, UsageError
from .evidence import EvidenceAnnotation, EvidenceScores, ScoreMap, aggregate_reliability, score_evidence
from .frame import DROP_BELOW, Frame, HypothesisSet, MassFunction, _same_frame

if os.environ.get("BELIEF_PURE_PYTHON"):
    from ._fold_py import restricted_fold

    BACKEND = "python"
else:
    try:
        from ._fold import restricted_fold

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._fold_py import restricted_fold

        BACKEND = "python"

UNCERTAIN = "uncertain"
VACUOUS_INDEX = -1
DEFAULT_MASS_CLAMP = 1.0 - 1e-6
ORACLE_MAX_LABELS = 16


@dataclass(frozen=True)
class FusionConfig:
    tau: float = 0.5
    mass_clamp: float = DEFAULT_MASS_CLAMP
    tolerance: float = 1e-9

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigurationError(f"tau must lie in [0, 1], got {self.tau}")
        if not 0.0 < self.mass_clamp < 1.0:
            raise ConfigurationError(f"mass_clamp must lie in (0, 1), got {self.mass_clamp}")
        if not self.tolerance > 0.0:
            raise ConfigurationError("tolerance must be positive")


@dataclass(frozen=True)
class RestrictedBpa:
    """Mass ``support_mass`` on one singleton, the rest on the whole frame.

    ``hypothesis_index == VACUOUS_INDEX`` marks the vacuous BPA.
    """

    hypothesis_index: int
    support_mass: float

    @property
    def theta_mass(self) -> float:
        return 1.0 - self.support_mass

    @property
    def is_vacuous(self) -> bool:
        return self.hypothesis_index == VACUOUS_INDEX or self.support_mass == 0.0

    def to_mass_function(self, frame: Frame) -> MassFunction:
        if self.is_vacuous:
            return MassFunction.vacuous(frame)
        if not 0 <= self.hypothesis_index < len(frame):
            raise UsageError(f"hypothesis index {self.hypothesis_index} outside frame")
        return MassFunction(
            frame, {1 << self.hypothesis_index: self.support_mass, frame.full_mask: self.theta_mass}
        )


VACUOUS_BPA = RestrictedBpa(VACUOUS_INDEX, 0.0)


def build_bpa(scores: EvidenceScores, hypothesis: int | None, config: FusionConfig = FusionConfig()) -> RestrictedBpa:
    if hypothesis is None or hypothesis == VACUOUS_INDEX:
        return VACUOUS_BPA
    support = min(max(scores.W * scores.D, 0.0), config.mass_clamp)
    if support == 0.0:
        return VACUOUS_BPA
    return RestrictedBpa(hypothesis, support)


def _fold(bpas: Sequence[RestrictedBpa], frame: Frame):
    L = len(frame)
    for bpa in bpas:
        if bpa.hypothesis_index >= L:
            raise UsageError(f"BPA index {bpa.hypothesis_index} outside frame of size {L}")
    return restricted_fold(
        [b.hypothesis_index for b in bpas], [b.support_mass for b in bpas], L
    )


def _to_mass(frame: Frame, singletons: Sequence[float], theta: float) -> MassFunction:
    focal = {1 << j: m for j, m in enumerate(singletons) if m >= DROP_BELOW}
    if theta >= DROP_BELOW:
        # a one-label frame has its singleton equal to the frame itself
        focal[frame.full_mask] = focal.get(frame.full_mask, 0.0) + theta
    total = math.fsum(focal.values())
    return MassFunction(frame, {k: v / total for k, v in focal.items()})


def combine_restricted(bpas: Sequence[RestrictedBpa], frame: Frame) -> MassFunction:
    """Left fold of Dempster's rule over restricted BPAs."""
    singletons, theta, _ = _fold(bpas, frame)
    return _to_mass(frame, singletons, theta)


def combine_general(a: MassFunction, b: MassFunction) -> MassFunction:
    """Dempster's rule over arbitrary focal elements (power-set oracle)."""
    _same_frame(a.frame, b.frame)
    if len(a.frame) > ORACLE_MAX_LABELS:
        raise CapacityError(f"oracle combination supports at most {ORACLE_MAX_LABELS} labels")
    joint: dict[int, list[float]] = {}
    for bits_a, mass_a in a.focal.items():
        for bits_b, mass_b in b.focal.items():
            joint.setdefault(bits_a & bits_b, []).append(mass_a * mass_b)
    joint.pop(0, None)
    unnormalized = {bits: math.fsum(parts) for bits, parts in joint.items()}
    z = math.fsum(unnormalized.values())
    if z <= 1e-12:
        raise TotalConflictError("Dempster normalizer vanished (total conflict)")
    return _to_general_mass(a.frame, {bits: m / z for bits, m in unnormalized.items()})


def _to_general_mass(frame: Frame, focal: dict[int, float]) -> MassFunction:
    focal = {k: v for k, v in focal.items() if v >= DROP_BELOW}
    total = math.fsum(focal.values())
    return MassFunction(frame, {k: v / total for k, v in focal.items()})


def fold_general(masses: Sequence[MassFunction], frame: Frame) -> MassFunction:
    result = MassFunction.vacuous(frame)
    for m in masses:
        result = combine_general(result, m)
    return result


def belief(mass: MassFunction, hypotheses: HypothesisSet) -> float:
    """Total mass committed to subsets of ``hypotheses``."""
    _same_frame(mass.frame, hypotheses.frame)
    if hypotheses.is_empty:
        raise UsageError("belief of the empty set is undefined here")
    return math.fsum(m for bits, m in mass.focal.items() if bits & ~hypotheses.bits == 0)


def belief_vector(mass: MassFunction) -> list[float]:
    return [belief(mass, HypothesisSet(mass.frame, 1 << j)) for j in range(len(mass.frame))]


def decide(belief_vector: Sequence[float], frame: Frame, tau: float) -> str:
    """Top label if its belief reaches ``tau`` (inclusive), else UNCERTAIN.

    Ties go to the lowest frame index.
    """
    if len(belief_vector) != len(frame):
        raise UsageError(f"belief vector has {len(belief_vector)} entries for a frame of {len(frame)}")
    best = 0
    for j in range(1, len(belief_vector)):
        if belief_vector[j] > belief_vector[best]:
            best = j
    if belief_vector[best] >= tau:
        return frame.labels[best]
    return UNCERTAIN


@dataclass(frozen=True)
class FusionResult:
    frame: Frame
    belief_vector: tuple[float, ...]
    uncertainty: float
    decision: str
    aggregate_reliability: float
    fused_mass: MassFunction
    conflict_total: float

    @property
    def max_belief(self) -> float:
        return max(self.belief_vector, default=0.0)

    def to_dict(self) -> dict:
        return {
            "belief": dict(zip(self.frame.labels, self.belief_vector)),
            "uncertainty": self.uncertainty,
            "decision": self.decision,
            "aggregate_reliability": self.aggregate_reliability,
            "conflict_total": self.conflict_total,
        }

    @classmethod
    def vacuous(cls, frame: Frame) -> FusionResult:
        return cls(
            frame=frame,
            belief_vector=(0.0,) * len(frame),
            uncertainty=1.0,
            decision=UNCERTAIN,
            aggregate_reliability=0.0,
            fused_mass=MassFunction.vacuous(frame),
            conflict_total=0.0,
        )


def fuse_evidence(
    annotations: Sequence[EvidenceAnnotation],
    frame: Frame,
    score_map: ScoreMap = ScoreMap(),
    config: FusionConfig = FusionConfig(),
) -> FusionResult:
    """Score, build BPAs, fold, and decide for one question."""
    scores = [score_evidence(a, score_map) for a in annotations]
    bpas = [
        build_bpa(s, frame.index(a.hypothesis) if a.hypothesis is not None else None, config)
        for s, a in zip(scores, annotations)
    ]
    singletons, theta, z_prod = _fold(bpas, frame)
    fused = _to_mass(frame, singletons, theta)
    b = tuple(belief_vector(fused))
    # single-label frames: the only singleton is the frame, report it as belief
    uncertainty = fused[frame.full_mask] if len(frame) > 1 else 0.0
    return FusionResult(
        frame=frame,
        belief_vector=b,
        uncertainty=uncertainty,
        decision=decide(b, frame, config.tau),
        aggregate_reliability=aggregate_reliability(scores, score_map.epsilon),
        fused_mass=fused,
        conflict_total=max(0.0, 1.0 - z_prod),
    )
