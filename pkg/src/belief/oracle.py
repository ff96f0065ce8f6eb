"""Randomized cross-check of the restricted fold against the power-set rule."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, UsageError
from .frame import Frame, make_frame
from .fusion import DEFAULT_MASS_CLAMP, ORACLE_MAX_LABELS, RestrictedBpa, combine_restricted, fold_general

TOLERANCE = 1e-9


@dataclass(frozen=True)
class Instance:
    n_labels: int
    hyps: tuple[int, ...]
    masses: tuple[float, ...]

    @property
    def frame(self) -> Frame:
        return make_frame([f"h{j}" for j in range(self.n_labels)])

    def bpas(self) -> list[RestrictedBpa]:
        return [RestrictedBpa(h, m) for h, m in zip(self.hyps, self.masses)]

    def to_dict(self) -> dict:
        return {"n_labels": self.n_labels, "hyps": list(self.hyps), "masses": list(self.masses)}


def random_instance(rng: np.random.Generator, max_labels: int = 6, max_items: int = 8, min_labels: int = 2) -> Instance:
    L = int(rng.integers(min_labels, max_labels + 1))
    M = int(rng.integers(1, max_items + 1))
    hyps = tuple(int(h) for h in rng.integers(0, L, size=M))
    masses = tuple(float(m) for m in rng.uniform(0.0, DEFAULT_MASS_CLAMP, size=M))
    return Instance(L, hyps, masses)


@dataclass
class OracleReport:
    trials: int
    seed: int
    max_oracle_deviation: float = 0.0
    max_order_deviation: float = 0.0
    max_sum_deviation: float = 0.0
    max_conservation_deviation: float = 0.0
    focal_bound_violations: int = 0
    failures: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "passed": self.passed,
            "max_oracle_deviation": self.max_oracle_deviation,
            "max_order_deviation": self.max_order_deviation,
            "max_sum_deviation": self.max_sum_deviation,
            "max_conservation_deviation": self.max_conservation_deviation,
            "focal_bound_violations": self.focal_bound_violations,
            "failures": self.failures[:5],
        }


def _orderings(n: int, rng: np.random.Generator, exhaustive_upto: int = 5, samples: int = 20):
    if n <= exhaustive_upto:
        return list(itertools.permutations(range(n)))
    return [tuple(int(i) for i in rng.permutation(n)) for _ in range(samples)]


def check_instance(inst: Instance, rng: np.random.Generator, fault: float = 0.0, orderings: int = 20) -> dict:
    """Deviations of one instance for each checked property."""
    frame = inst.frame
    bpas = inst.bpas()
    if fault:
        first = bpas[0]
        bpas[0] = RestrictedBpa(first.hypothesis_index, min(first.support_mass + fault, DEFAULT_MASS_CLAMP))
    fast = combine_restricted(bpas, frame)
    slow = fold_general([b.to_mass_function(frame) for b in inst.bpas()], frame)
    oracle_dev = fast.max_deviation(slow)

    order_dev = 0.0
    for perm in _orderings(len(bpas), rng, samples=orderings):
        permuted = combine_restricted([bpas[i] for i in perm], frame)
        order_dev = max(order_dev, permuted.max_deviation(fast))

    allowed = {1 << j for j in range(inst.n_labels)} | {frame.full_mask}
    bound_ok = len(fast) <= inst.n_labels + 1 and set(fast.focal) <= allowed and 0 not in fast.focal
    total = math.fsum(fast.focal.values())
    conservation = math.fsum(fast[1 << j] for j in range(inst.n_labels)) + fast[frame.full_mask]
    return {
        "oracle": oracle_dev,
        "order": order_dev,
        "sum": abs(total - 1.0),
        "conservation": abs(conservation - 1.0),
        "bound_ok": bound_ok,
    }


def run_oracle_check(
    trials: int = 1000,
    seed: int = 0,
    max_labels: int = 6,
    max_items: int = 8,
    *,
    fault: float = 0.0,
    tolerance: float = TOLERANCE,
) -> OracleReport:
    if max_labels > ORACLE_MAX_LABELS:
        raise CapacityError(f"max_labels must be at most {ORACLE_MAX_LABELS}")
    if max_labels < 2 or max_items < 1 or trials < 1:
        raise UsageError("need trials >= 1, max_labels >= 2, max_items >= 1")
    rng = np.random.default_rng(seed)
    report = OracleReport(trials, seed)
    for _ in range(trials):
        inst = random_instance(rng, max_labels, max_items)
        dev = check_instance(inst, rng, fault)
        report.max_oracle_deviation = max(report.max_oracle_deviation, dev["oracle"])
        report.max_order_deviation = max(report.max_order_deviation, dev["order"])
        report.max_sum_deviation = max(report.max_sum_deviation, dev["sum"])
        report.max_conservation_deviation = max(report.max_conservation_deviation, dev["conservation"])
        if not dev["bound_ok"]:
            report.focal_bound_violations += 1
        if not dev["bound_ok"] or max(dev["oracle"], dev["order"], dev["sum"], dev["conservation"]) > tolerance:
            report.failures.append({"instance": inst.to_dict(), "deviations": dev})
    return report
