"""Command-line entry point: one tool for the whole workflow.

Every tier writes its output to disk, so stages can be run one at a time and
re-run independently:

    vts ingest report.pdf --out work
    vts analyze micro --out work
    vts group --in work
    vts analyze meso --out work
    vts analyze macro --out work
    vts consolidate --in work --out work --frozen-clock
    vts query --severity High --doc work/result.yaml
    vts serve --doc work/result.yaml --journal work/journal.ndjson --port 8080

Exit codes: 0 success; 1 validation failure; 2 usage error; 3 provider or
budget failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from collections.abc import Iterable, Sequence
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

from vts import canonical, stages
from vts.config import PipelineConfig, load_config
from vts.consolidation import FROZEN_TIMESTAMP
from vts.errors import (
    BudgetExceeded,
    ConfigError,
    ExtractionFailed,
    MalformedResponse,
    MissingFixture,
    ObserverFailed,
    ProviderError,
    VtsError,
)
from vts.evaluation import (
    PredictionRange,
    run_comparison,
    score_forecast,
    score_to_dict,
)
from vts.providers import ProviderSession, build_session
from vts.query import query_findings, query_from_params

LOCK_NAME = ".vts.lock"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_PROVIDER = 3

_PROVIDER_ERRORS = (
    ProviderError,
    BudgetExceeded,
    MissingFixture,
    MalformedResponse,
    ObserverFailed,
    ExtractionFailed,
)


class UsageError(Exception):
    """Invocation problem: bad flags, missing inputs, busy output directory."""


@contextmanager
def _dir_locks(dirs: Iterable[str | Path]):
    """One invocation per output directory, enforced with a lock file."""
    acquired: list[Path] = []
    try:
        for raw in sorted({str(Path(d).resolve()) for d in dirs}):
            directory = Path(raw)
            directory.mkdir(parents=True, exist_ok=True)
            lock = directory / LOCK_NAME
            try:
                fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                raise UsageError(
                    f"{directory} is in use by another invocation "
                    f"(remove {lock} if that run crashed)"
                ) from None
            try:
                os.write(fd, f"{os.getpid()}\n".encode())
            finally:
                os.close(fd)
            acquired.append(lock)
        yield
    finally:
        for lock in acquired:
            try:
                lock.unlink()
            except OSError:
                pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vts",
        description="Evidence-anchored document insight pipeline.",
    )
    parser.add_argument("--config", metavar="FILE", help="YAML configuration file")
    parser.add_argument(
        "--provider-mode",
        choices=("live", "record", "replay"),
        help="override the configured model-provider mode",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", help="rasterize a PDF and extract page records")
    p.add_argument("pdf", help="input PDF file")
    p.add_argument("--out", required=True, metavar="DIR", help="working directory")
    p.add_argument("--dpi", type=int, metavar="N", help="rasterization DPI override")

    p = sub.add_parser("analyze", help="run one observer tier")
    p.add_argument("level", choices=("micro", "meso", "macro"))
    p.add_argument("--out", required=True, metavar="DIR", help="working directory")
    p.add_argument(
        "--pages",
        metavar="DIR",
        help="page records directory (micro only; default OUT/pages)",
    )

    p = sub.add_parser("group", help="cluster the micro findings into issue groups")
    p.add_argument("--in", dest="workdir", required=True, metavar="DIR")
    p.add_argument("--taxonomy", metavar="FILE", help="category taxonomy YAML")

    p = sub.add_parser("consolidate", help="assemble and validate the result document")
    p.add_argument("--in", dest="workdir", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument(
        "--frozen-clock",
        action="store_true",
        help="stamp the epoch instead of the wall clock (reproducible output)",
    )

    p = sub.add_parser("query", help="search the findings in a result document")
    p.add_argument("--doc", metavar="FILE", help="result document (default ./result.yaml)")
    p.add_argument("--severity", choices=("High", "Medium", "Low"))
    p.add_argument("--category")
    p.add_argument("--page")
    p.add_argument("--level", choices=("micro", "meso", "macro"))
    p.add_argument("--keyword")
    p.add_argument("--status", choices=("proposed", "accepted", "amended", "discarded"))

    p = sub.add_parser("serve", help="run the human review service")
    p.add_argument("--doc", required=True, metavar="FILE", help="result document")
    p.add_argument("--journal", required=True, metavar="FILE", help="decision journal")
    p.add_argument("--port", required=True, type=int)
    p.add_argument("--pages", metavar="DIR", help="page records for evidence and recalibration")
    p.add_argument("--taxonomy", metavar="FILE")
    p.add_argument("--ui", metavar="DIR", help="static UI assets (default frontend/dist)")
    p.add_argument("--host", default="127.0.0.1")

    p = sub.add_parser("evaluate", help="run the evaluation harness")
    eval_sub = p.add_subparsers(dest="eval_command", metavar="WHAT")
    pc = eval_sub.add_parser("compare", help="one-shot summary vs full pipeline")
    pc.add_argument("pdf", help="input PDF file")
    pc.add_argument("--out", default="evaluation", metavar="DIR")
    pc.add_argument("--frozen-clock", action="store_true")
    pc.add_argument("--taxonomy", metavar="FILE")

    p = sub.add_parser("score-forecast", help="gap and direction scoring for one forecast")
    p.add_argument("--low", type=float, required=True)
    p.add_argument("--high", type=float, required=True)
    p.add_argument("--mid", type=float, help="default: midpoint of low and high")
    p.add_argument("--actual", type=float, required=True)
    p.add_argument("--baseline", type=float, help="enables direction scoring")
    p.add_argument("--epsilon", type=float, default=0.0, help="direction deadband")

    return parser


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    if args.provider_mode:
        config = replace(config, provider=replace(config.provider, mode=args.provider_mode))
    return config


def _session(config: PipelineConfig) -> ProviderSession:
    return build_session(config.provider, config.budget)


def _cmd_ingest(args: argparse.Namespace) -> int:
    config = _load_config(args)
    with _dir_locks([args.out]):
        report = stages.stage_ingest(
            args.pdf, args.out, config, _session(config), dpi=args.dpi
        )
    pages = ", ".join(p.page for p in report.pages)
    print(f"ingested {len(report.pages)} page(s): {pages}")
    return EXIT_OK


def _cmd_analyze(args: argparse.Namespace) -> int:
    config = _load_config(args)
    with _dir_locks([args.out]):
        if args.level == "micro":
            output = stages.stage_micro(
                args.out, config, _session(config), pages_from=args.pages
            )
        elif args.level == "meso":
            output = stages.stage_meso(args.out, config, _session(config))
        else:
            output = stages.stage_macro(args.out, config, _session(config))
    print(
        f"{args.level}: {len(output.records)} record(s), "
        f"{len(output.rejected)} rejected — {stages.stage_file(args.out, args.level)}"
    )
    return EXIT_OK


def _cmd_group(args: argparse.Namespace) -> int:
    config = _load_config(args)
    taxonomy = stages.resolve_taxonomy(config, args.taxonomy)
    with _dir_locks([args.workdir]):
        grouping = stages.stage_group(args.workdir, taxonomy)
    n_groups = sum(len(g) for g in grouping.groups.values())
    print(
        f"grouped {len(grouping.findings)} finding(s) into {n_groups} group(s) "
        f"across {len(grouping.groups)} categorie(s)"
    )
    return EXIT_OK


def _cmd_consolidate(args: argparse.Namespace) -> int:
    generated_at = FROZEN_TIMESTAMP if args.frozen_clock else _utc_now()
    with _dir_locks([args.workdir, args.out]):
        doc = stages.stage_consolidate(args.workdir, args.out, generated_at)
    print(
        f"result: {len(doc.micro_findings)} finding(s), {len(doc.meso_levers)} lever(s), "
        f"{len(doc.macro_plan)} step(s) — {Path(args.out) / 'result.yaml'}"
    )
    return EXIT_OK


def _cmd_query(args: argparse.Namespace) -> int:
    doc_path = Path(args.doc) if args.doc else Path("result.yaml")
    if not doc_path.is_file():
        raise UsageError(
            f"no result document at {doc_path} — pass --doc FILE"
            if not args.doc
            else f"no result document at {doc_path}"
        )
    params = {
        key: value
        for key, value in (
            ("severity", args.severity),
            ("category", args.category),
            ("page", args.page),
            ("level", args.level),
            ("keyword", args.keyword),
            ("status", args.status),
        )
        if value
    }
    if not params:
        raise UsageError("pass at least one filter (e.g. --severity High)")
    try:
        query = query_from_params(params)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    doc = canonical.parse_result_document(
        doc_path.read_text(encoding="utf-8"), what=doc_path.name
    )
    hits = query_findings(doc, query)
    payload = {
        "matches": len(hits),
        "findings": [
            dict(canonical.finding_to_dict(hit.finding), group_id=hit.group_id)
            for hit in hits
        ],
    }
    print(canonical.yaml_dump(payload), end="")
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    from vts.ingestion import load_pages
    from vts.review import serve

    config = _load_config(args)
    doc_path = Path(args.doc)
    if not doc_path.is_file():
        raise UsageError(f"no result document at {doc_path}")
    document = canonical.parse_result_document(
        doc_path.read_text(encoding="utf-8"), what=doc_path.name
    )
    pages = load_pages(args.pages) if args.pages else None
    ui_dir: Path | None = Path(args.ui) if args.ui else Path("frontend/dist")
    if not ui_dir.is_dir():
        ui_dir = None
    print(f"serving {doc_path} on {args.host}:{args.port}")
    serve(
        document,
        pages,
        args.journal,
        args.port,
        pages_dir=args.pages,
        doc_path=doc_path,
        session_factory=lambda: _session(config),
        org=config.org,
        taxonomy=stages.resolve_taxonomy(config, args.taxonomy),
        discount_rate=config.discount_rate,
        prompts_dir=config.prompts_dir,
        ui_dir=ui_dir,
        host=args.host,
    )
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    if args.eval_command != "compare":
        raise UsageError("evaluate needs a subcommand: `vts evaluate compare REPORT.pdf`")
    config = _load_config(args)
    taxonomy = stages.resolve_taxonomy(config, args.taxonomy)
    with _dir_locks([args.out]):
        report = run_comparison(
            args.pdf,
            args.out,
            config,
            make_session=lambda: _session(config),
            taxonomy=taxonomy,
            frozen_clock=args.frozen_clock,
        )
    print(canonical.yaml_dump(report.as_dict()), end="")
    if report.oneshot is None or report.pipeline is None:
        return EXIT_VALIDATION
    return EXIT_OK


def _cmd_score_forecast(args: argparse.Namespace) -> int:
    try:
        pred = PredictionRange(
            low=args.low, high=args.high, mid=args.mid, baseline=args.baseline
        )
        score = score_forecast(pred, args.actual, epsilon=args.epsilon)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(canonical.yaml_dump(score_to_dict(score)), end="")
    return EXIT_OK


def _utc_now() -> str:
    from datetime import datetime, timezone

    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "ingest":
            return _cmd_ingest(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "group":
            return _cmd_group(args)
        if args.command == "consolidate":
            return _cmd_consolidate(args)
        if args.command == "query":
            return _cmd_query(args)
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        if args.command == "score-forecast":
            return _cmd_score_forecast(args)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _PROVIDER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except VtsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
