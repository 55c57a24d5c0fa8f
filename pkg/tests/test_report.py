import csv
import io
import json

import jsonschema
import pytest

from hybridlens.report import (
    CSV_COLUMNS, FIELD_SOURCED, aggregate, build_app_report, emit, validate_document,
)
from hybridlens.smali import SmaliProgram, load_program

from .conftest import APPS, CORPUS


def report(app):
    return build_app_report(load_program(APPS / app))


def urls(rep):
    return [(u.source, u.record.raw, u.record.scheme_class.value) for u in rep.url_entries]


def test_leaky_report_urls_and_snippet():
    rep = report("leaky_webview")
    assert urls(rep) == [
        ("argument", "javascript: print(Android.showToast('Hello World'))", "JAVASCRIPT"),
        ("argument", "http://www.dummypage.com", "HTTP"),
        ("argument", "about:blank", "ABOUT_BLANK"),
    ]
    http = rep.url_entries[1].record
    assert http.insecure_transport and http.sdk_category == "Untrusted/Unknown"
    (js,) = rep.js_entries
    assert [h.pattern.value for h in js.hits] == ["BRIDGE_WRITEBACK"]
    assert js.hits[0].details == {"bridge": "Android", "method": "showToast"}


def test_callback_loaded_script_is_marked():
    rep = report("endingscene")
    (js,) = rep.js_entries
    assert js.in_callback
    assert [h.pattern.value for h in js.hits] == ["IIFE_BRIDGE_ONLY"]
    file_url = rep.url_entries[0]
    assert file_url.record.scheme_class.value == "FILE" and not file_url.in_callback


def test_field_sourced_url_provenance():
    (u,) = report("sdk_field").url_entries
    d = u.to_dict()
    assert d["provenance"] == FIELD_SOURCED
    assert d["field_origin"] == "Lcom/adsdk/AdWebView;->sBootstrap:Ljava/lang/String;"
    assert d["record"]["raw"] == "⟨?⟩"


def test_script_src_urls_become_url_entries():
    rep = build_app_report(load_program(CORPUS / "app_js"))
    srcs = [u for u in rep.url_entries if u.source == "script-src"]
    assert len(srcs) == 1
    rec = srcs[0].record
    # this URL contains spaces, so it is not a valid URI
    assert rec.scheme_class.value == "MALFORMED"
    assert rec.diagnostics == ["illegal character ' ' (U+0020) in path at byte 33"]


@pytest.mark.parametrize("app", ["leaky_webview", "endingscene", "sdk_field", "discarded_source"])
def test_reports_match_schema(app):
    validate_document(report(app).to_dict(), "app_report")


def test_schema_rejects_extra_keys():
    doc = report("sdk_field").to_dict()
    doc["surprise"] = 1
    with pytest.raises(jsonschema.ValidationError):
        validate_document(doc, "app_report")


def test_json_is_canonical():
    out = emit(report("leaky_webview"))
    text = out.decode("utf-8")
    assert text.endswith("}\n")
    doc = json.loads(text)
    assert text == json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    assert emit(report("leaky_webview")) == out


def test_failed_app_when_nothing_parses():
    prog = SmaliProgram("broken", diagnostics=["A.smali:1: .super before .class"])
    rep = build_app_report(prog)
    assert rep.failed
    assert not build_app_report(SmaliProgram("empty")).failed


def corpus_reports():
    return [build_app_report(load_program(p)) for p in sorted(CORPUS.iterdir())]


def test_aggregate_flags_and_implications():
    stats = aggregate(corpus_reports())
    assert stats["apps"] == 4
    assert stats["flags"] == {"uses_webview": 3, "js_enabled": 2, "injects_class": 1, "has_sensitive_flow": 1}
    assert stats["flag_percentages"] == {"uses_webview": 75.0, "js_enabled": 50.0,
                                         "injects_class": 25.0, "has_sensitive_flow": 25.0}
    validate_document(stats, "corpus_stats")


def test_aggregate_is_order_independent():
    reps = corpus_reports()
    assert emit(aggregate(reps)) == emit(aggregate(list(reversed(reps))))


def test_aggregate_js_and_patterns():
    stats = aggregate(corpus_reports())
    js = stats["js"]
    assert js["snippets"] == 3 and js["unresolved"] == 0
    assert js["clone_group_count"] == 3
    assert stats["patterns"]["FORM_SECRET_INJECTION"] == {"apps": 1, "apps_pct": 25.0}
    assert stats["patterns"]["SCRIPT_INJECTION_INSECURE"]["apps"] == 1
    assert stats["sensitive_flows"] == {"total": 1, "by_category": {"Device ID": 1}}


def test_aggregate_empty_corpus():
    stats = aggregate([])
    assert stats["apps"] == 0 and stats["flag_percentages"]["uses_webview"] == 0.0
    validate_document(stats, "corpus_stats")


def test_csv_findings():
    out = emit(corpus_reports(), "csv").decode("utf-8")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert tuple(rows[0].keys()) == CSV_COLUMNS
    kinds = {(r["app_id"], r["finding"]) for r in rows}
    assert ("app_full", "sensitive_flow") in kinds
    assert ("app_js", "script_src") in kinds
    assert ("app_js", "js_pattern") in kinds
    assert [r["app_id"] for r in rows] == sorted(r["app_id"] for r in rows)


def test_emit_rejects_unknown_format():
    with pytest.raises(ValueError):
        emit(report("sdk_field"), "xml")
