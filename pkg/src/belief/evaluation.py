"""Accuracy, macro-F1, uncertainty strata, path complementarity, paired bootstrap, sweeps."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, UsageError
from .frame import Frame

LOW_UPPER = 0.25
HIGH_LOWER = 0.55
BOOTSTRAP_RNG = "numpy.random.Generator(PCG64(seed))"


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricReport:
    n: int
    accuracy: float
    macro_f1: float
    per_class: dict[str, ClassScores]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": {k: asdict(v) for k, v in self.per_class.items()},
        }


def compute_metrics(preds: Sequence[str | None], golds: Sequence[str], frame: Frame) -> MetricReport:
    """Exact-match accuracy and macro-F1 over classes present in ``golds``.

    Predictions outside the frame (``uncertain``, ``invalid``, None) count as
    wrong and belong to no class.
    """
    if len(preds) != len(golds):
        raise UsageError(f"{len(preds)} predictions for {len(golds)} gold labels")
    for g in golds:
        if g not in frame:
            raise UsageError(f"gold label {g!r} not in frame")
    n = len(golds)
    correct = sum(p == g for p, g in zip(preds, golds))
    per_class: dict[str, ClassScores] = {}
    gold_present = []
    for label in frame.labels:
        tp = sum(p == label and g == label for p, g in zip(preds, golds))
        n_pred = sum(p == label for p in preds)
        n_gold = sum(g == label for g in golds)
        if n_pred == 0 and n_gold == 0:
            continue
        precision = tp / n_pred if n_pred else 0.0
        recall = tp / n_gold if n_gold else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class[label] = ClassScores(precision, recall, f1, n_gold)
        if n_gold:
            gold_present.append(f1)
    macro = math.fsum(gold_present) / len(gold_present) if gold_present else 0.0
    return MetricReport(n, correct / n if n else 0.0, macro, per_class)


def uncertainty_bucket(u: float) -> str:
    if u < LOW_UPPER:
        return "LOW"
    if u <= HIGH_LOWER:
        return "MEDIUM"
    return "HIGH"


@dataclass(frozen=True)
class Stratum:
    n: int
    accuracy_main: float | None
    accuracy_baseline: float | None
    delta: float | None


@dataclass(frozen=True)
class StrataReport:
    buckets: dict[str, Stratum]

    def to_dict(self) -> dict:
        return {"buckets": {k: asdict(v) for k, v in self.buckets.items()}}

    def rows(self) -> list[dict]:
        return [{"level": k, **asdict(v)} for k, v in self.buckets.items()]


def stratify(results: Iterable[tuple[float, bool, bool]]) -> StrataReport:
    """Bucket by the main system's residual uncertainty ``u``.

    The baseline is scored on the same buckets; it has no uncertainty of its own.
    """
    groups: dict[str, list[tuple[bool, bool]]] = {"LOW": [], "MEDIUM": [], "HIGH": []}
    for u, main_ok, base_ok in results:
        if not 0.0 <= u <= 1.0 + 1e-9:
            raise UsageError(f"uncertainty {u} outside [0, 1]")
        groups[uncertainty_bucket(u)].append((bool(main_ok), bool(base_ok)))
    buckets = {}
    for name, rows in groups.items():
        if not rows:
            buckets[name] = Stratum(0, None, None, None)
            continue
        main = sum(m for m, _ in rows) / len(rows)
        base = sum(b for _, b in rows) / len(rows)
        buckets[name] = Stratum(len(rows), main, base, main - base)
    return StrataReport(buckets)


@dataclass(frozen=True)
class ComplementarityReport:
    n: int
    both_correct: int
    ds_only: int
    llm_only: int
    both_wrong: int
    agree_rate: float
    divergent_count: int
    divergent_acc: float | None

    def to_dict(self) -> dict:
        return asdict(self)


def complementarity(
    ds: Sequence[str], llm: Sequence[str], final: Sequence[str], golds: Sequence[str]
) -> ComplementarityReport:
    """Correctness patterns of the two paths and arbitration accuracy where they diverge.

    Agreement needs both paths to name the same frame label, so an abstaining
    or invalid path always counts as divergent.
    """
    n = len(golds)
    if not len(ds) == len(llm) == len(final) == n:
        raise UsageError("ds, llm, final and golds must have equal length")
    both = ds_only = llm_only = neither = agree = resolved = 0
    for d, l, f, g in zip(ds, llm, final, golds):
        d_ok, l_ok = d == g, l == g
        if d_ok and l_ok:
            both += 1
        elif d_ok:
            ds_only += 1
        elif l_ok:
            llm_only += 1
        else:
            neither += 1
        if d == l and d not in _NON_LABELS:
            agree += 1
        elif f == g:
            resolved += 1
    divergent = n - agree
    return ComplementarityReport(
        n=n,
        both_correct=both,
        ds_only=ds_only,
        llm_only=llm_only,
        both_wrong=neither,
        agree_rate=agree / n if n else 0.0,
        divergent_count=divergent,
        divergent_acc=resolved / divergent if divergent else None,
    )


_NON_LABELS = frozenset({"uncertain", "invalid", "", None})


@dataclass(frozen=True)
class BootstrapReport:
    n: int
    delta_mean: float
    ci_low: float
    ci_high: float
    resamples: int
    seed: int
    supported: bool
    rng: str = BOOTSTRAP_RNG

    def to_dict(self) -> dict:
        return asdict(self)


def paired_bootstrap(
    correct_a: Sequence[bool], correct_b: Sequence[bool], resamples: int = 5000, seed: int = 0
) -> BootstrapReport:
    """95% percentile interval for accuracy(a) - accuracy(b) under paired resampling.

    Each resample draws ``n`` instance indices with replacement from
    ``numpy.random.default_rng(seed)``; the interval uses
    ``numpy.percentile`` (linear interpolation) at 2.5 and 97.5.
    ``delta_mean`` is the observed difference on the full sample.
    """
    a = np.asarray(correct_a, dtype=np.float64)
    b = np.asarray(correct_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise UsageError("paired bootstrap needs two equal-length 1-D sequences")
    n = a.shape[0]
    if n < 1:
        raise UsageError("paired bootstrap needs at least one instance")
    if resamples < 1:
        raise UsageError("resamples must be at least 1")
    diff = a - b
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(resamples, n))
    deltas = diff[idx].mean(axis=1)
    lo, hi = np.percentile(deltas, [2.5, 97.5])
    lo, hi = float(lo), float(hi)
    return BootstrapReport(
        n=n,
        delta_mean=float(diff.mean()),
        ci_low=lo,
        ci_high=hi,
        resamples=resamples,
        seed=seed,
        supported=bool(lo > 0.0 or hi < 0.0),
    )


# ---------------------------------------------------------------- sweep

SWEEP_COLUMNS = ("k", "tau", "n", "accuracy", "macro_f1", "abstentions", "error")


@dataclass(frozen=True)
class SweepRow:
    k: int
    tau: float
    n: int = 0
    accuracy: float | None = None
    macro_f1: float | None = None
    abstentions: int | None = None
    error: str | None = None


def parse_grid_values(spec: str, integer: bool = False) -> list:
    """``1,3,5`` or ``0.1..0.9`` (step 0.1) or ``0.1..0.9:0.2``."""
    spec = spec.strip()
    if ".." in spec:
        lo_s, _, rest = spec.partition("..")
        hi_s, _, step_s = rest.partition(":")
        lo, hi = float(lo_s), float(hi_s)
        step = float(step_s) if step_s else (1.0 if integer else 0.1)
        if step <= 0 or hi < lo:
            raise ConfigurationError(f"bad range {spec!r}")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        values = [round(lo + i * step, 10) for i in range(count)]
    else:
        values = [float(v) for v in spec.split(",") if v.strip()]
    if integer:
        out = [int(v) for v in values]
        if any(v < 1 for v in out):
            raise ConfigurationError("k values must be positive integers")
        return out
    if any(not 0.0 <= v <= 1.0 for v in values):
        raise ConfigurationError(f"tau values must lie in [0, 1]: {spec!r}")
    return values


def sweep(
    dataset: Sequence,
    ks: Sequence[int],
    taus: Sequence[float],
    config,
    clients,
    *,
    coverage: Callable[[int], list[str]] | None = None,
    concurrency: int = 1,
) -> list[SweepRow]:
    """One pipeline run per ``(k, tau)`` cell.

    ``coverage(k)`` may report missing fixtures; such cells become error rows
    and the sweep moves on.
    """
    from dataclasses import replace

    from .pipeline import run_dataset

    for tau in taus:
        if not 0.0 <= tau <= 1.0:
            raise ConfigurationError(f"tau must lie in [0, 1], got {tau}")
    rows = []
    for k in ks:
        gaps = coverage(k) if coverage else []
        for tau in taus:
            if gaps:
                shown = ", ".join(gaps[:3]) + (" ..." if len(gaps) > 3 else "")
                rows.append(SweepRow(k, tau, error=f"missing fixtures ({len(gaps)}): {shown}"))
                continue
            cell = replace(config, k=k, tau=tau)
            results = run_dataset(dataset, cell, clients, concurrency)
            scored = [(r, q) for r, q in zip(results, dataset) if q.gold is not None]
            if not scored:
                rows.append(SweepRow(k, tau, error="no gold labels"))
                continue
            # metrics are per-question frames; pool them over a frame of all labels
            report = pooled_metrics([r.final_answer for r, _ in scored], [q.gold for _, q in scored])
            abstain = sum(r.fusion.decision == "uncertain" and not r.fusion_skipped for r in results)
            rows.append(SweepRow(k, tau, report.n, report.accuracy, report.macro_f1, abstain))
    return rows


def pooled_metrics(preds: Sequence[str | None], golds: Sequence[str]) -> MetricReport:
    """Metrics over the union of gold labels, for datasets whose frames differ."""
    from .frame import make_frame

    labels = list(dict.fromkeys(golds))
    return compute_metrics(preds, golds, make_frame(labels))


def rows_to_csv(rows: Sequence[Mapping] | Sequence, columns: Sequence[str] | None = None) -> str:
    dict_rows = [r if isinstance(r, Mapping) else asdict(r) for r in rows]
    columns = list(columns or (dict_rows[0].keys() if dict_rows else []))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in dict_rows:
        writer.writerow({k: "" if row.get(k) is None else row.get(k) for k in columns})
    return buf.getvalue()
