"""Frames of discernment and sparse mass functions over their power set.

Subsets of a frame are encoded as integer bitmasks: bit ``j`` is set when the
``j``-th label belongs to the subset.  The full mask is the frame itself and
zero is the empty set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

from .errors import (
    CapacityError,
    FrameLookupError,
    ParseError,
    SchemaError,
    TotalConflictError,
    UsageError,
)

MAX_LABELS = 64
SUM_TOLERANCE = 1e-9
# Masses below this after normalization are dropped to keep the map sparse.
DROP_BELOW = 1e-12


@dataclass(frozen=True)
class Frame:
    """Ordered set of mutually exclusive answer labels."""

    labels: tuple[str, ...]
    _index: Mapping[str, int] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        if not labels:
            raise SchemaError("frame needs at least one label")
        if len(labels) > MAX_LABELS:
            raise CapacityError(f"frame has {len(labels)} labels; at most {MAX_LABELS} supported")
        cleaned = []
        for label in labels:
            if not isinstance(label, str) or not label.strip():
                raise SchemaError(f"frame labels must be non-empty strings, got {label!r}")
            cleaned.append(label.strip())
        index: dict[str, int] = {}
        for i, label in enumerate(cleaned):
            if label in index:
                raise SchemaError(f"duplicate frame label {label!r}")
            index[label] = i
        object.__setattr__(self, "labels", tuple(cleaned))
        object.__setattr__(self, "_index", MappingProxyType(index))

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[str]:
        return iter(self.labels)

    def __contains__(self, label: object) -> bool:
        return isinstance(label, str) and label.strip() in self._index

    @property
    def full_mask(self) -> int:
        return (1 << len(self.labels)) - 1

    def index(self, label: str) -> int:
        try:
            return self._index[label.strip()]
        except (KeyError, AttributeError):
            raise FrameLookupError(f"label {label!r} is not in frame {list(self.labels)}") from None

    def label(self, index: int) -> str:
        if not 0 <= index < len(self.labels):
            raise FrameLookupError(f"index {index} outside frame of size {len(self.labels)}")
        return self.labels[index]

    def theta(self) -> HypothesisSet:
        return HypothesisSet(self, self.full_mask)

    def empty(self) -> HypothesisSet:
        return HypothesisSet(self, 0)

    def subset(self, labels: Iterable[str]) -> HypothesisSet:
        bits = 0
        for label in labels:
            bits |= 1 << self.index(label)
        return HypothesisSet(self, bits)

    def labels_of(self, bits: int) -> list[str]:
        return [lab for j, lab in enumerate(self.labels) if bits >> j & 1]


def make_frame(labels: Iterable[str]) -> Frame:
    """Build a frame whose label order is the input order."""
    return Frame(tuple(labels))


@dataclass(frozen=True)
class HypothesisSet:
    """A subset of a frame, stored as a bitmask."""

    frame: Frame
    bits: int

    def __post_init__(self) -> None:
        if not 0 <= self.bits <= self.frame.full_mask:
            raise UsageError(f"mask {self.bits:#b} does not fit a frame of size {len(self.frame)}")

    def __and__(self, other: HypothesisSet) -> HypothesisSet:
        return intersect(self, other)

    def __len__(self) -> int:
        return bin(self.bits).count("1")

    @property
    def is_empty(self) -> bool:
        return self.bits == 0

    @property
    def is_theta(self) -> bool:
        return self.bits == self.frame.full_mask

    def labels(self) -> list[str]:
        return self.frame.labels_of(self.bits)

    def issubset(self, other: HypothesisSet) -> bool:
        _same_frame(self.frame, other.frame)
        return self.bits & ~other.bits == 0


def _same_frame(a: Frame, b: Frame) -> None:
    if a is not b and a.labels != b.labels:
        raise UsageError("hypothesis sets belong to different frames")


def singleton(frame: Frame, label: str) -> HypothesisSet:
    return HypothesisSet(frame, 1 << frame.index(label))


def intersect(a: HypothesisSet, b: HypothesisSet) -> HypothesisSet:
    _same_frame(a.frame, b.frame)
    return HypothesisSet(a.frame, a.bits & b.bits)


class MassFunction:
    """Normalized, immutable mass function with sparse focal elements.

    ``focal`` maps bitmasks to strictly positive masses summing to one.  Use
    :func:`normalize` to build one from unnormalized masses.
    """

    __slots__ = ("frame", "_focal")

    def __init__(self, frame: Frame, focal: Mapping[int, float]) -> None:
        full = frame.full_mask
        clean: dict[int, float] = {}
        for bits, mass in focal.items():
            bits = int(bits)
            mass = float(mass)
            if bits == 0:
                raise SchemaError("mass functions carry no mass on the empty set")
            if not 0 < bits <= full:
                raise UsageError(f"mask {bits:#b} does not fit a frame of size {len(frame)}")
            if not (mass > 0.0) or mass > 1.0 + SUM_TOLERANCE:
                raise SchemaError(f"focal mass {mass!r} outside (0, 1]")
            clean[bits] = mass
        total = math.fsum(clean.values())
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise SchemaError(f"masses sum to {total!r}, expected 1")
        self.frame = frame
        self._focal = MappingProxyType(clean)

    @classmethod
    def vacuous(cls, frame: Frame) -> MassFunction:
        return cls(frame, {frame.full_mask: 1.0})

    @property
    def focal(self) -> Mapping[int, float]:
        return self._focal

    def __getitem__(self, key: HypothesisSet | int) -> float:
        return self._focal.get(self._bits(key), 0.0)

    def __len__(self) -> int:
        return len(self._focal)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MassFunction):
            return NotImplemented
        return self.frame == other.frame and dict(self._focal) == dict(other._focal)

    def __repr__(self) -> str:
        parts = ", ".join(
            f"{{{','.join(self.frame.labels_of(b))}}}: {m:.6g}" for b, m in sorted(self._focal.items())
        )
        return f"MassFunction({parts})"

    def _bits(self, key: HypothesisSet | int) -> int:
        if isinstance(key, HypothesisSet):
            _same_frame(self.frame, key.frame)
            return key.bits
        return int(key)

    def items(self) -> Iterator[tuple[HypothesisSet, float]]:
        for bits, mass in self._focal.items():
            yield HypothesisSet(self.frame, bits), mass

    def max_deviation(self, other: MassFunction) -> float:
        """Largest absolute difference over the union of focal elements."""
        _same_frame(self.frame, other.frame)
        keys = set(self._focal) | set(other._focal)
        return max((abs(self[k] - other[k]) for k in keys), default=0.0)

    def to_dict(self) -> dict:
        return {
            "frame": list(self.frame.labels),
            "focal": [
                {"set": self.frame.labels_of(bits), "mass": mass}
                for bits, mass in sorted(self._focal.items(), key=lambda kv: (bin(kv[0]).count("1"), kv[0]))
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping) -> MassFunction:
        try:
            frame = make_frame(data["frame"])
            raw: dict[int, float] = {}
            for entry in data["focal"]:
                bits = frame.subset(entry["set"]).bits
                raw[bits] = raw.get(bits, 0.0) + float(entry["mass"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed mass function record: {exc}") from None
        return cls(frame, raw)

    @classmethod
    def from_json(cls, text: str) -> MassFunction:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
        return cls.from_dict(data)


def normalize(raw: Mapping[HypothesisSet | int, float], frame: Frame | None = None) -> MassFunction:
    """Drop the empty set and rescale the remaining masses to sum to one.

    Keys may be :class:`HypothesisSet` instances or bare bitmasks; bare
    bitmasks need ``frame``.
    """
    acc: dict[int, float] = {}
    for key, mass in raw.items():
        if isinstance(key, HypothesisSet):
            if frame is None:
                frame = key.frame
            _same_frame(frame, key.frame)
            bits = key.bits
        else:
            bits = int(key)
        mass = float(mass)
        if mass < 0.0 or math.isnan(mass):
            raise SchemaError(f"negative mass {mass!r}")
        if bits:
            acc[bits] = acc.get(bits, 0.0) + mass
    if frame is None:
        raise UsageError("normalize needs a frame when keys are bare bitmasks")
    total = math.fsum(acc.values())
    if total <= DROP_BELOW:
        raise TotalConflictError("no mass left outside the empty set")
    focal = {bits: m / total for bits, m in acc.items() if m / total >= DROP_BELOW}
    # re-normalize after dropping so the sum invariant stays tight
    total = math.fsum(focal.values())
    return MassFunction(frame, {bits: m / total for bits, m in focal.items()})
