"""Command-line entry point: ``hybridlens analyze|url|js``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .bridges import ConfigError, SensitiveSourceDB
from .js import classify_patterns, snippet_or_unresolved
from .report import AnalysisConfig, aggregate, build_app_report, emit
from .smali import load_program
from .urls import SdkHostDB, categorize_host, parse_and_validate

logger = logging.getLogger("hybridlens")

EXIT_OK = 0
EXIT_APP_FAILED = 1
EXIT_CONFIG = 2


@dataclass
class RunConfig:
    roots: list
    out: Path
    sources: Optional[Path] = None
    sdk_db: Optional[Path] = None
    jobs: int = 1
    csv: bool = False
    errors: list = field(default_factory=list)

    def validate(self) -> list:
        problems = []
        if not self.roots:
            problems.append("no input roots given")
        for p in (self.sources, self.sdk_db):
            if p is not None and not p.is_file():
                problems.append(f"no such file: {p}")
        if self.jobs < 1:
            problems.append("--jobs must be at least 1")
        ids = [Path(r).name for r in self.roots]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            problems.append(f"duplicate app ids: {', '.join(dupes)}")
        return problems


def _analyze_one(root: str, config: AnalysisConfig) -> tuple:
    """Worker: returns (app_id, report dict or None, error message or None)."""
    app_id = Path(root).name
    try:
        program = load_program(root)
    except OSError as exc:
        return app_id, None, str(exc)
    report = build_app_report(program, config)
    return app_id, report.to_dict(), None


def cmd_analyze(cfg: RunConfig) -> int:
    problems = cfg.validate()
    if problems:
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        sources = SensitiveSourceDB.load(cfg.sources) if cfg.sources else None
        sdk = SdkHostDB.load(cfg.sdk_db) if cfg.sdk_db else None
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    analysis = AnalysisConfig(sources=sources, sdk_hosts=sdk)
    cfg.out.mkdir(parents=True, exist_ok=True)

    roots = [str(r) for r in cfg.roots]
    if cfg.jobs > 1 and len(roots) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_analyze_one, roots, [analysis] * len(roots)))
    else:
        results = [_analyze_one(r, analysis) for r in roots]

    status = EXIT_OK
    reports = []
    for app_id, doc, err in results:
        if err is not None:
            print(f"{app_id}: {err}", file=sys.stderr)
            status = EXIT_APP_FAILED
            continue
        for d in doc["diagnostics"]:
            print(f"{app_id}: {d}", file=sys.stderr)
        if doc["failed"]:
            print(f"{app_id}: no class could be parsed", file=sys.stderr)
            status = EXIT_APP_FAILED
            continue
        (cfg.out / f"{app_id}.report.json").write_bytes(emit(doc))
        reports.append(doc)
    (cfg.out / "corpus.stats.json").write_bytes(emit(aggregate(reports)))
    if cfg.csv:
        (cfg.out / "findings.csv").write_bytes(emit(reports, "csv"))
    return status


def cmd_url(raw: str, sdk_db: Optional[Path] = None) -> int:
    db = SdkHostDB.load(sdk_db) if sdk_db else SdkHostDB.default()
    rec = categorize_host(parse_and_validate(raw), db)
    _print_json(rec.to_dict())
    return EXIT_OK


def cmd_js(path: Path, bridges: list) -> int:
    try:
        raw = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    snip = snippet_or_unresolved(raw)
    doc = snip.to_dict()
    doc["patterns"] = [h.to_dict() for h in classify_patterns(snip, bridges)]
    _print_json(doc)
    return EXIT_OK


def _print_json(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridlens",
                                     description="Static analysis of hybrid Android apps from Smali.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command")

    a = sub.add_parser("analyze", help="analyze one or more app directories of Smali files")
    a.add_argument("roots", nargs="*", help="app directories (one per app)")
    a.add_argument("--out", required=True, type=Path, help="output directory")
    a.add_argument("--sources", type=Path, help="sensitive source list (class method category)")
    a.add_argument("--sdk-db", type=Path, help="SDK host list (host_suffix sdk_name category)")
    a.add_argument("--jobs", type=int, default=1, help="worker processes")
    a.add_argument("--csv", action="store_true", help="also write findings.csv")

    u = sub.add_parser("url", help="validate and classify a single URL")
    u.add_argument("raw")
    u.add_argument("--sdk-db", type=Path)

    j = sub.add_parser("js", help="tokenize and classify a JavaScript file")
    j.add_argument("file", type=Path)
    j.add_argument("--bridge", action="append", default=[], help="exposed bridge name (repeatable)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "analyze":
        if not args.roots:
            parser.print_usage(sys.stderr)
            print("error: no input roots given", file=sys.stderr)
            return EXIT_CONFIG
        cfg = RunConfig(roots=[Path(r) for r in args.roots], out=args.out, sources=args.sources,
                        sdk_db=args.sdk_db, jobs=args.jobs, csv=args.csv)
        return cmd_analyze(cfg)
    if args.command == "url":
        try:
            return cmd_url(args.raw, args.sdk_db)
        except (ConfigError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    if args.command == "js":
        return cmd_js(args.file, args.bridge)
    parser.print_usage(sys.stderr)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
