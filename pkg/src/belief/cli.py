"""Command line interface.

Exit codes: 0 success, 1 a property check failed, 2 usage, configuration or
I/O error.  Degraded pipeline stages never change the exit code.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Sequence

from .arbitration import ArbitrationThresholds
from .clients import (
    ChatCompletionsClient,
    PubMedRetriever,
    ReplayRetriever,
    ReplayStore,
    ReplayTextClient,
    client_mode,
)
from .errors import BeliefError, ConfigurationError, ParseError
from .evaluation import (
    SWEEP_COLUMNS,
    complementarity,
    compute_metrics,
    paired_bootstrap,
    parse_grid_values,
    rows_to_csv,
    stratify,
    sweep,
)
from .evidence import ScoreMap, parse_annotations
from .frame import make_frame
from .fusion import FusionConfig, fuse_evidence
from .oracle import run_oracle_check
from .pipeline import Clients, PipelineConfig, QuestionRecord, Variant, fixture_gaps, load_dataset, run_dataset

log = logging.getLogger("belief")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2


class CliError(Exception):
    """Reported on stderr with exit code 2."""


@dataclass
class RunConfig:
    dataset: str | None = None
    fixtures: str | None = None
    output: str | None = None
    client_mode: str | None = None
    variant: str = "full"
    k: int = 5
    tau: float = 0.5
    score_map: str | None = None
    arbitration: str = "rule"
    concurrency: int = 1
    seed: int = 0
    belief_floor: float = 0.5
    uncertainty_ceiling: float = 0.55
    reliability_floor: float = 0.5

    @classmethod
    def load(cls, path: str | None, overrides: dict[str, Any]) -> RunConfig:
        values: dict[str, Any] = {}
        if path:
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except OSError as exc:
                raise CliError(f"cannot read config {path}: {exc}") from None
            except json.JSONDecodeError as exc:
                raise CliError(f"config {path}: {exc.msg} at line {exc.lineno}, column {exc.colno}") from None
            if not isinstance(data, dict):
                raise CliError(f"config {path} must be a JSON object")
            known = {f.name for f in fields(cls)}
            unknown = sorted(set(k.replace("-", "_") for k in data) - known)
            if unknown:
                raise CliError(f"unknown config keys: {unknown}")
            values.update({k.replace("-", "_"): v for k, v in data.items()})
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def validate(self) -> None:
        if not isinstance(self.k, int) or self.k < 1:
            raise CliError(f"k must be a positive integer, got {self.k!r}")
        if not 0.0 <= float(self.tau) <= 1.0:
            raise CliError(f"tau must lie in [0, 1], got {self.tau}")
        if self.arbitration not in ("rule", "prompt"):
            raise CliError("arbitration must be 'rule' or 'prompt'")
        if self.concurrency < 1:
            raise CliError("concurrency must be at least 1")
        try:
            self.mode = client_mode(self.client_mode)
        except ConfigurationError as exc:
            raise CliError(str(exc)) from None
        for name in ("dataset", "score_map") + (("fixtures",) if self.mode == "replay" else ()):
            value = getattr(self, name)
            if name != "score_map" and not value:
                raise CliError(f"--{name.replace('_', '-')} is required")
            if value and not Path(value).is_file():
                raise CliError(f"{name.replace('_', ' ')} file not found: {value}")

    def pipeline_config(self) -> PipelineConfig:
        try:
            return PipelineConfig(
                k=self.k,
                tau=float(self.tau),
                variant=Variant.parse(self.variant),
                seed=self.seed,
                score_map=ScoreMap.load(self.score_map) if self.score_map else ScoreMap(),
                thresholds=ArbitrationThresholds(self.belief_floor, self.uncertainty_ceiling, self.reliability_floor),
                arbitration_mode=self.arbitration,
            )
        except BeliefError as exc:
            raise CliError(str(exc)) from None

    def clients(self) -> tuple[Clients, ReplayStore | None]:
        if self.mode == "live":
            return Clients(ChatCompletionsClient.from_env(), PubMedRetriever()), None
        store = ReplayStore.load(self.fixtures)
        return Clients(ReplayTextClient(store), ReplayRetriever(store)), store


# ---------------------------------------------------------------- helpers

def _read_jsonl(path: str) -> list[dict]:
    rows = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if line.strip():
                    try:
                        rows.append(json.loads(line))
                    except json.JSONDecodeError as exc:
                        raise ParseError(exc.msg, f"{path}: line {lineno}, column {exc.colno}") from None
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from None
    return rows


def _answer(row: dict) -> str | None:
    for key in ("final_answer", "answer", "prediction"):
        if key in row:
            return row[key]
    return None


def _by_id(rows: Sequence[dict], path: str) -> dict[str, dict]:
    out = {}
    for row in rows:
        qid = row.get("question_id", row.get("id"))
        if qid is None:
            raise CliError(f"{path}: record without question_id")
        out[str(qid)] = row
    return out


def _load_dataset(path: str) -> list[QuestionRecord]:
    try:
        return load_dataset(path)
    except OSError as exc:
        raise CliError(f"cannot read dataset {path}: {exc}") from None


def _aligned(dataset_path: str, *result_paths: str) -> tuple[list[QuestionRecord], list[list[dict]]]:
    records = [q for q in _load_dataset(dataset_path) if q.gold is not None]
    tables = []
    for path in result_paths:
        by_id = _by_id(_read_jsonl(path), path)
        missing = [q.id for q in records if q.id not in by_id]
        if missing:
            raise CliError(f"{path}: no result for {len(missing)} question(s), e.g. {missing[:3]}")
        tables.append([by_id[q.id] for q in records])
    return records, tables


def _union_frame(records: Sequence[QuestionRecord]):
    labels: dict[str, None] = {}
    for q in records:
        labels.update(dict.fromkeys(q.options))
    return make_frame(list(labels))


def _emit(payload: dict, out: str | None, csv_path: str | None = None, csv_rows: list | None = None, columns=None) -> None:
    text = json.dumps(payload, indent=2, ensure_ascii=False) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if csv_path is not None and csv_rows is not None:
        Path(csv_path).write_text(rows_to_csv(csv_rows, columns), encoding="utf-8")


# ---------------------------------------------------------------- commands

def cmd_run(args: argparse.Namespace) -> int:
    cfg = RunConfig.load(
        args.config,
        {
            "dataset": args.dataset,
            "fixtures": args.fixtures,
            "output": args.output,
            "client_mode": args.client_mode,
            "variant": args.variant,
            "k": args.k,
            "tau": args.tau,
            "score_map": args.score_map,
            "arbitration": args.arbitration,
            "concurrency": args.concurrency,
            "seed": args.seed,
        },
    )
    cfg.validate()
    pipeline_config = cfg.pipeline_config()
    records = _load_dataset(cfg.dataset)
    clients, _ = cfg.clients()
    results = run_dataset(records, pipeline_config, clients, cfg.concurrency)
    lines = "".join(r.to_json() + "\n" for r in results)
    if cfg.output:
        try:
            Path(cfg.output).write_text(lines, encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot write {cfg.output}: {exc}") from None
    else:
        sys.stdout.write(lines)
    degraded = sum(bool(r.degraded) for r in results)
    abstained = sum(r.fusion.decision == "uncertain" for r in results)
    print(
        f"{len(results)} questions, variant={pipeline_config.variant.value}, "
        f"{abstained} symbolic abstentions, {degraded} with degraded stages",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_fuse(args: argparse.Namespace) -> int:
    frame = make_frame([s for s in args.frame.split(",")])
    try:
        text = Path(args.annotations).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {args.annotations}: {exc}") from None
    annotations = parse_annotations(text, frame)
    score_map = ScoreMap.load(args.score_map) if args.score_map else ScoreMap()
    result = fuse_evidence(annotations, frame, score_map, FusionConfig(tau=args.tau))
    _emit(result.to_dict(), args.out)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    records, (rows,) = _aligned(args.dataset, args.results)
    report = compute_metrics([_answer(r) for r in rows], [q.gold for q in records], _union_frame(records))
    per_class = [{"label": k, **v} for k, v in report.to_dict()["per_class"].items()]
    _emit(report.to_dict(), args.out, args.csv, per_class)
    return EXIT_OK


def cmd_stratify(args: argparse.Namespace) -> int:
    records, (main, base) = _aligned(args.dataset, args.results, args.baseline)
    triples = []
    for q, m, b in zip(records, main, base):
        try:
            u = float(m["fusion"]["uncertainty"])
        except (KeyError, TypeError, ValueError):
            raise CliError(f"{args.results}: result {q.id} has no fusion uncertainty") from None
        triples.append((u, _answer(m) == q.gold, _answer(b) == q.gold))
    report = stratify(triples)
    _emit(report.to_dict(), args.out, args.csv, report.rows())
    return EXIT_OK


def cmd_comp(args: argparse.Namespace) -> int:
    records, (rows,) = _aligned(args.dataset, args.results)
    report = complementarity(
        [r.get("z_ds") for r in rows], [r.get("z_llm") for r in rows], [_answer(r) for r in rows], [q.gold for q in records]
    )
    _emit(report.to_dict(), args.out, args.csv, [report.to_dict()])
    return EXIT_OK


def cmd_boot(args: argparse.Namespace) -> int:
    records, (a, b) = _aligned(args.dataset, args.results, args.baseline)
    report = paired_bootstrap(
        [_answer(r) == q.gold for r, q in zip(a, records)],
        [_answer(r) == q.gold for r, q in zip(b, records)],
        resamples=args.resamples,
        seed=args.seed,
    )
    _emit(report.to_dict(), args.out, args.csv, [report.to_dict()])
    return EXIT_OK


def _parse_grid(items: Sequence[str]) -> tuple[list[int], list[float]]:
    ks: list[int] = [5]
    taus: list[float] = [0.5]
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise CliError(f"grid entries look like k=1,3,5 or tau=0.1..0.9, got {item!r}")
        try:
            if key.strip() == "k":
                ks = parse_grid_values(value, integer=True)
            elif key.strip() == "tau":
                taus = parse_grid_values(value)
            else:
                raise CliError(f"unknown grid axis {key!r}")
        except (ValueError, ConfigurationError) as exc:
            raise CliError(f"bad grid entry {item!r}: {exc}") from None
    return ks, taus


def cmd_sweep(args: argparse.Namespace) -> int:
    ks, taus = _parse_grid(args.grid or [])
    cfg = RunConfig.load(
        args.config,
        {
            "dataset": args.dataset,
            "fixtures": args.fixtures,
            "client_mode": args.client_mode,
            "variant": args.variant,
            "score_map": args.score_map,
            "arbitration": args.arbitration,
            "concurrency": args.concurrency,
            "seed": args.seed,
        },
    )
    cfg.validate()
    base = cfg.pipeline_config()
    records = _load_dataset(cfg.dataset)
    clients, store = cfg.clients()
    coverage = (lambda k: fixture_gaps(store, records, k, base.variant)) if store is not None else None
    rows = sweep(records, ks, taus, base, clients, coverage=coverage, concurrency=cfg.concurrency)
    payload = {"variant": base.variant.value, "rows": [r.__dict__ for r in rows]}
    csv_path = args.csv
    if args.out and csv_path is None:
        csv_path = str(Path(args.out).with_suffix(".csv"))
    _emit(payload, args.out, csv_path, rows, SWEEP_COLUMNS)
    return EXIT_OK


def cmd_oracle_check(args: argparse.Namespace) -> int:
    if args.max_L > 16:
        raise CliError("--max-L must be at most 16 (the power-set oracle is 2^L x 2^L)")
    if args.max_L < 2 or args.max_M < 1 or args.trials < 1:
        raise CliError("need --trials >= 1, --max-L >= 2, --max-M >= 1")
    report = run_oracle_check(args.trials, args.seed, args.max_L, args.max_M, fault=args.inject_fault)
    _emit(report.to_dict(), args.out)
    print(
        f"oracle-check: {report.trials} trials, max deviation {report.max_oracle_deviation:.3e}, "
        f"{len(report.failures)} failing",
        file=sys.stderr,
    )
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


# ---------------------------------------------------------------- parser

def _add_run_options(p: argparse.ArgumentParser, with_k_tau: bool = True) -> None:
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--dataset")
    p.add_argument("--fixtures", help="replay fixture JSONL")
    p.add_argument("--client-mode", choices=["replay", "live"], help="defaults to $BELIEF_CLIENT_MODE or replay")
    p.add_argument("--variant", choices=[v.value for v in Variant])
    if with_k_tau:
        p.add_argument("--k", type=int)
        p.add_argument("--tau", type=float)
    p.add_argument("--score-map", help="JSON score map overriding the default")
    p.add_argument("--arbitration", choices=["rule", "prompt"])
    p.add_argument("--concurrency", type=int)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="belief", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the pipeline over a dataset")
    _add_run_options(p)
    p.add_argument("--output", help="results JSONL (stdout if omitted)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fuse", help="fuse an annotation file")
    p.add_argument("--annotations", required=True)
    p.add_argument("--frame", required=True, help="comma separated labels, e.g. yes,no,maybe")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--score-map")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fuse)

    for name, func, helptext in (
        ("eval", cmd_eval, "accuracy and macro-F1"),
        ("stratify", cmd_stratify, "uncertainty-stratified accuracy against a baseline"),
        ("comp", cmd_comp, "dual-path complementarity"),
        ("boot", cmd_boot, "paired bootstrap of accuracy difference against a baseline"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--results", required=True)
        p.add_argument("--dataset", required=True)
        if name in ("stratify", "boot"):
            p.add_argument("--baseline", required=True, help="baseline results or predictions JSONL")
        if name == "boot":
            p.add_argument("--resamples", type=int, default=5000)
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out")
        p.add_argument("--csv")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="grid over retrieval depth k and threshold tau")
    _add_run_options(p, with_k_tau=False)
    p.add_argument("--grid", nargs="+", metavar="AXIS=VALUES", help="e.g. k=1,3,5,7,10 tau=0.1..0.9")
    p.add_argument("--out")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", help="restricted fusion vs power-set oracle")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-L", type=int, default=6)
    p.add_argument("--max-M", type=int, default=8)
    p.add_argument("--out")
    p.add_argument("--inject-fault", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, BeliefError) as exc:
        print(f"belief {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"belief {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
