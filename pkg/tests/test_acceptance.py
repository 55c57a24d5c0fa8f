"""One check per acceptance criterion; prints a PASS/FAIL line for each.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 -m tests.test_acceptance``.
"""

import tempfile
import time
from pathlib import Path

from hybridlens.bridges import analyze_bridges
from hybridlens.cli import main as cli_main
from hybridlens.js import Pattern, classify_patterns, tokenize_js
from hybridlens.report import aggregate, build_app_report
from hybridlens.smali import load_program
from hybridlens.urls import corpus_url_stats, parse_and_validate

from .conftest import ACCEPTANCE_RESULTS, APPS, CORPUS, JS
from .oracles.harness import EQUIVALENCE_SEEDS, SLICE_SEEDS, equivalence_mismatch, slice_violations
from .oracles.mutants import mutants
from .test_js import BRIDGES, DISTINCT, FREQUENT
from .test_urls import CASES, case_mismatches, synthetic_network_urls

ADMARVEL = "http://admarvel.s3.amazonaws.com/   js/admarvel_mraid_v2_ complete.js"


def record(num, title, ok, detail):
    ACCEPTANCE_RESULTS[num] = (ok, title, detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {title} ({detail})")
    assert ok, detail


def js_hits(name, bridges=BRIDGES):
    return classify_patterns(tokenize_js((JS / name).read_text(encoding="utf-8")), bridges)


def reference_failures():
    failures = []

    def check(label, cond):
        if not cond:
            failures.append(label)

    (bridge,) = analyze_bridges(load_program(APPS / "leaky_webview"))
    check("bridge name", bridge.exposed_name.value == "Android")
    check("bridged class", bridge.bridged_class == "Lcom/example/leaky/Leaker;")
    check("device id flow", [f.category for f in bridge.flows] == ["Device ID"])

    rep = build_app_report(load_program(APPS / "leaky_webview"))
    blank = [u.record for u in rep.url_entries if u.record.raw == "about:blank"]
    check("about:blank", len(blank) == 1 and blank[0].scheme_class.value == "ABOUT_BLANK")

    hits = js_hits("dynamic_script.js")
    insecure = [h for h in hits if h.pattern is Pattern.SCRIPT_INJECTION_INSECURE]
    check("insecure script injection", len(insecure) == 1 and insecure[0].details["src"] == ADMARVEL)

    for name, bridge_name in [("synchjs_writeback.js", "SynchJS"), ("synchjs_compact.js", "SynchJS"),
                              ("htmlout_process_html.js", "HTMLOUT"), ("htmlout_meta_tags.js", "HTMLOUT"),
                              ("htmlout_show_html.js", "HTMLOUT")]:
        wb = [h for h in js_hits(name) if h.pattern is Pattern.BRIDGE_WRITEBACK]
        check(f"writeback {name}", len(wb) == 1 and wb[0].details["bridge"] == bridge_name)

    for name in ("vungle_highlight.js", "vungle_leak.js", "malware_clickjack.js"):
        check(f"clickjack {name}", Pattern.CLICKJACK_TAP_HIGHLIGHT in [h.pattern for h in js_hits(name)])

    rows = [r for r in (JS / "form_fills.txt").read_text(encoding="utf-8").splitlines() if r.strip()]
    for row in rows:
        got = [h.pattern for h in classify_patterns(tokenize_js(row))]
        check(f"form secret {row[:40]}", Pattern.FORM_SECRET_INJECTION in got)
    check("form rows present", any("j_password" in r for r in rows) and any("access-pin" in r for r in rows))
    return failures


def test_criterion_1_reference_findings():
    t0 = time.perf_counter()
    failures = reference_failures()
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 5
    record(1, "reference fixtures give the expected findings", ok,
           f"{len(failures)} mismatches {failures[:3]}, {elapsed:.2f}s of 5s")


def test_criterion_2_string_oracle():
    t0 = time.perf_counter()
    bad = [m for m in map(equivalence_mismatch, EQUIVALENCE_SEEDS) if m]
    elapsed = time.perf_counter() - t0
    n = len(EQUIVALENCE_SEEDS)
    ok = n >= 1000 and not bad and elapsed < 30
    record(2, "string resolution equals reference interpreter", ok,
           f"{n - len(bad)}/{n} programs agree, {elapsed:.1f}s of 30s")


def test_criterion_3_slice_soundness():
    tried, bad = 0, []
    for seed in SLICE_SEEDS:
        n, b = slice_violations(seed)
        tried += n
        bad += b
    ok = len(SLICE_SEEDS) >= 500 and tried > 0 and not bad
    record(3, "deleting non-slice instructions keeps the value", ok,
           f"{len(SLICE_SEEDS)} methods, {tried} deletions, {len(bad)} violations")


def test_criterion_4_url_table():
    bad = [c["raw"] for c in CASES if case_mismatches(c)]
    cleartext = [c for c in CASES if c.get("note", "").startswith("known cleartext URL")]
    valid = sum(1 for c in CASES if c["valid"])
    ok = len(CASES) >= 40 and not bad and len(cleartext) == 5
    record(4, "URL validation table", ok,
           f"{len(CASES) - len(bad)}/{len(CASES)} agree, {valid} valid cases reconstructed, "
           f"{len(cleartext)} known cleartext URLs")


def test_criterion_5_clone_invariance():
    misses = 0
    for name in FREQUENT:
        src = (JS / name).read_text(encoding="utf-8")
        key = tokenize_js(src).clone_key
        misses += sum(1 for m in mutants(src, count=10) if tokenize_js(m).clone_key != key)
    keys = {tokenize_js((JS / n).read_text(encoding="utf-8")).clone_key for n in DISTINCT}
    ok = misses == 0 and len(keys) == len(DISTINCT)
    record(5, "renamed clones share a group, distinct snippets do not", ok,
           f"{len(FREQUENT) * 10 - misses}/{len(FREQUENT) * 10} mutants matched, "
           f"{len(keys)} groups for {len(DISTINCT)} distinct snippets")


def test_criterion_6_corpus_shape():
    reports = [build_app_report(load_program(p)) for p in sorted(CORPUS.iterdir())]
    flags = aggregate(reports)["flags"]
    bars = [flags[k] for k in ("uses_webview", "js_enabled", "injects_class", "has_sensitive_flow")]
    chain = all((not f.has_sensitive_flow or f.injects_class) and (not f.injects_class or f.uses_webview)
                and (not f.js_enabled or f.uses_webview) for f in (r.flags for r in reports))
    stats = corpus_url_stats(parse_and_validate(u) for u in synthetic_network_urls())
    ok = bars == [3, 2, 1, 1] and chain and stats["network_urls"] == 535 and stats["distinct_paths"] == 147
    record(6, "corpus shape", ok,
           f"bars {'/'.join(map(str, bars))}, implications {'hold' if chain else 'broken'}, "
           f"{stats['network_urls']} network URLs over {stats['distinct_paths']} paths")


def test_criterion_7_determinism():
    apps = [str(p) for p in sorted(CORPUS.iterdir())]
    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for run in ("a", "b"):
            out = Path(tmp) / run
            cli_main(["analyze", *apps, "--out", str(out), "--csv"])
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    same = outs[0] == outs[1]
    record(7, "two analyze runs are byte-identical", same and len(outs[0]) == len(apps) + 2,
           f"{len(outs[0])} files per run, {'identical' if same else 'different'}")


if __name__ == "__main__":
    failed = 0
    for fn in [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]:
        try:
            fn()
        except AssertionError:
            failed += 1
    raise SystemExit(1 if failed else 0)
