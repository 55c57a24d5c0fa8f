"""Per-app reports, corpus statistics and their JSON/CSV serialization."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Optional

import jsonschema

from .bridges import SensitiveSourceDB, analyze_bridges, app_flags, in_callback, AppFlags
from .dataflow import EVALUATE_JS, LOAD_URL, ResolvedString, find_resolved_arguments
from .js import Pattern, classify_patterns, group_clones, injected_urls, snippet_or_unresolved
from .smali import SmaliProgram
from .urls import (
    HostKind, SchemeClass, SdkHostDB, UrlRecord, categorize_host, corpus_url_stats,
    parse_and_validate, percent,
)

logger = logging.getLogger(__name__)

FIELD_SOURCED = "SDK/field-sourced"
FLAG_NAMES = ("uses_webview", "js_enabled", "injects_class", "has_sensitive_flow")
CSV_COLUMNS = ("app_id", "finding", "class", "method", "index", "subject", "detail")


@dataclass
class AnalysisConfig:
    sources: Optional[SensitiveSourceDB] = None
    sdk_hosts: Optional[SdkHostDB] = None

    def source_db(self) -> SensitiveSourceDB:
        return self.sources if self.sources is not None else SensitiveSourceDB.default()

    def sdk_db(self) -> SdkHostDB:
        return self.sdk_hosts if self.sdk_hosts is not None else SdkHostDB.default()


@dataclass
class UrlEntry:
    site: dict
    api: str
    source: str  # "argument" or "script-src"
    in_callback: bool
    value: ResolvedString
    record: object  # UrlRecord
    field_origin: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "call_site": self.site,
            "api": self.api,
            "source": self.source,
            "in_webviewclient_callback": self.in_callback,
            "value": self.value.to_dict(),
            "field_origin": self.field_origin,
            "provenance": FIELD_SOURCED if self.field_origin else None,
            "record": self.record.to_dict(),
        }


@dataclass
class JsEntry:
    site: dict
    api: str
    in_callback: bool
    snippet: object  # JsSnippet
    hits: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "call_site": self.site,
            "api": self.api,
            "in_webviewclient_callback": self.in_callback,
            "snippet": self.snippet.summary(),
            "normalized": self.snippet.normalized,
            "patterns": [h.to_dict() for h in self.hits],
        }


@dataclass
class AppReport:
    app_id: str
    flags: AppFlags
    bridges: list = field(default_factory=list)
    url_entries: list = field(default_factory=list)
    js_entries: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    failed: bool = False

    def to_dict(self) -> dict:
        return {
            "app_id": self.app_id,
            "failed": self.failed,
            "flags": self.flags.to_dict(),
            "bridges": [b.to_dict() for b in self.bridges],
            "url_records": [u.to_dict() for u in self.url_entries],
            "js_snippets": [j.to_dict() for j in self.js_entries],
            "diagnostics": list(self.diagnostics),
        }


def _field_origin(value: ResolvedString) -> Optional[str]:
    for origin in value.origins:
        if origin.startswith("field "):
            return origin[len("field "):]
    return None


def build_app_report(program: SmaliProgram, config: Optional[AnalysisConfig] = None) -> AppReport:
    config = config or AnalysisConfig()
    sdk_db = config.sdk_db()
    bridges = analyze_bridges(program, config.source_db())
    names = {b.exposed_name.value for b in bridges if b.exposed_name.is_constant}
    resolved = find_resolved_arguments(program, LOAD_URL + EVALUATE_JS)
    cb_cache: dict = {}
    urls: list = []
    scripts: list = []
    for arg in resolved:
        site = arg.call_site
        if arg.position != 0:
            continue
        api = site.callee.name
        where = site.to_dict()
        cb = in_callback(program, site, cb_cache)
        for value in arg.variants:
            text = value.render()
            if api == "loadUrl":
                rec = parse_and_validate(text)
                rec = categorize_host(rec, sdk_db)
                urls.append(UrlEntry(where, api, "argument", cb, value, rec, _field_origin(value)))
                if rec.scheme_class is not SchemeClass.JAVASCRIPT:
                    continue
            snip = snippet_or_unresolved(text)
            hits = classify_patterns(snip, names)
            scripts.append(JsEntry(where, api, cb, snip, hits))
            for src in injected_urls(hits):
                rec = categorize_host(parse_and_validate(src), sdk_db)
                urls.append(UrlEntry(where, api, "script-src", cb,
                                     ResolvedString.constant(src), rec))
    flags = app_flags(program, bridges, resolved)
    failed = not program.classes and bool(program.diagnostics)
    return AppReport(
        app_id=program.app_id,
        flags=flags,
        bridges=bridges,
        url_entries=urls,
        js_entries=scripts,
        diagnostics=list(program.diagnostics),
        failed=failed,
    )


# ---------------------------------------------------------------------------
# corpus aggregation

def _as_dict(report) -> dict:
    return report if isinstance(report, dict) else report.to_dict()


def aggregate(reports: Iterable) -> dict:
    """Fold app reports (objects or their dict form) into corpus statistics."""
    docs = sorted((_as_dict(r) for r in reports), key=lambda d: d["app_id"])
    n = len(docs)
    flag_counts = {k: sum(1 for d in docs if d["flags"][k]) for k in FLAG_NAMES}

    records = []
    field_sourced = 0
    for d in docs:
        for u in d["url_records"]:
            records.append(_record_from_dict(u["record"]))
            if u["field_origin"]:
                field_sourced += 1

    # clone groups across apps; snippets are re-lexed from their raw text
    items = []
    unresolved = 0
    total_js = 0
    pattern_apps = {p.value: set() for p in Pattern}
    for d in docs:
        for j in d["js_snippets"]:
            total_js += 1
            snip = snippet_or_unresolved(j["snippet"]["raw"])
            if snip.unresolved:
                unresolved += 1
            items.append((d["app_id"], j["call_site"], snip))
            for h in j["patterns"]:
                pattern_apps[h["pattern"]].add(d["app_id"])
    groups = group_clones(items)

    flows: dict = {}
    flow_total = 0
    for d in docs:
        for b in d["bridges"]:
            for f in b["flows"]:
                flow_total += 1
                flows[f["category"]] = flows.get(f["category"], 0) + 1

    return {
        "apps": n,
        "failed_apps": sum(1 for d in docs if d.get("failed")),
        "flags": flag_counts,
        "flag_percentages": {k: percent(v, n) for k, v in flag_counts.items()},
        "urls": corpus_url_stats(records),
        "field_sourced_urls": field_sourced,
        "js": {
            "snippets": total_js,
            "unresolved": unresolved,
            "unresolved_pct": percent(unresolved, total_js),
            "clone_group_count": len(groups),
            "clone_groups": [g.to_dict() for g in groups],
        },
        "patterns": {
            k: {"apps": len(v), "apps_pct": percent(len(v), n)}
            for k, v in pattern_apps.items()
        },
        "sensitive_flows": {
            "total": flow_total,
            "by_category": dict(sorted(flows.items())),
        },
    }


def _record_from_dict(d: dict):
    return UrlRecord(
        raw=d["raw"], valid=d["valid"], scheme_class=SchemeClass(d["scheme_class"]),
        diagnostics=list(d["diagnostics"]), protocol=d["protocol"], userinfo=d["userinfo"],
        host=d["host"], port=d["port"], path=d["path"], search=d["search"],
        fragment=d["fragment"], host_kind=HostKind(d["host_kind"]),
        insecure_transport=d["insecure_transport"], sdk_category=d["sdk_category"],
        sdk_name=d["sdk_name"],
    )


# ---------------------------------------------------------------------------
# serialization

@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("hybridlens").joinpath(f"schemas/{name}.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_document(doc: dict, schema: str) -> None:
    """Raise jsonschema.ValidationError if ``doc`` does not match ``schema``."""
    jsonschema.validate(doc, load_schema(schema))


def _schema_for(doc: dict) -> str:
    return "app_report" if "app_id" in doc else "corpus_stats"


def findings_rows(report) -> list:
    """Flatten one app report into CSV rows (one per finding)."""
    d = _as_dict(report)
    app = d["app_id"]
    rows = []

    def row(finding, site, subject, detail=""):
        rows.append({"app_id": app, "finding": finding, "class": site["class"],
                     "method": site["method"], "index": site["index"],
                     "subject": subject, "detail": detail})

    for b in d["bridges"]:
        row("bridge", b["call_site"], b["exposed_name"]["rendered"],
            f"{b['bridged_class']} js_enabled={b['js_enabled']}")
        for f in b["flows"]:
            row("sensitive_flow", b["call_site"], f["method"], f"{f['category']}: {f['source']}")
    for u in d["url_records"]:
        rec = u["record"]
        detail = rec["scheme_class"]
        if rec["valid"] is False:
            detail += ": " + "; ".join(rec["diagnostics"])
        if u["provenance"]:
            detail += f" ({u['provenance']} {u['field_origin']})"
        row("url" if u["source"] == "argument" else "script_src", u["call_site"], rec["raw"], detail)
    for j in d["js_snippets"]:
        if j["snippet"]["unresolved"]:
            row("js_unresolved", j["call_site"], j["snippet"]["clone_key"],
                j["snippet"]["error"] or "unresolved value")
        for h in j["patterns"]:
            ev = ", ".join(f"{k}={v}" for k, v in sorted(h["evidence"].items()))
            row("js_pattern", j["call_site"], h["pattern"], ev)
    return rows


def emit(obj, fmt: str = "json") -> bytes:
    """Serialize a report, stats document or list of reports (csv) to bytes."""
    if fmt == "json":
        doc = _as_dict(obj)
        validate_document(doc, _schema_for(doc))
        return (json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")
    if fmt == "csv":
        reports = obj if isinstance(obj, (list, tuple)) else [obj]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in sorted((_as_dict(r) for r in reports), key=lambda d: d["app_id"]):
            w.writerows(findings_rows(r))
        return buf.getvalue().encode("utf-8")
    raise ValueError(f"unknown format {fmt!r}")
