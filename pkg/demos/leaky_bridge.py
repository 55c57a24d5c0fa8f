"""Walk through one hybrid app: the exposed bridge, what it leaks and what the WebView loads."""

from pathlib import Path

from hybridlens import build_app_report, load_program

APP = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "apps" / "leaky_webview"


def main():
    report = build_app_report(load_program(APP))
    print(f"app {report.app_id}: {report.flags.to_dict()}")
    for b in report.bridges:
        print(f"bridge {b.exposed_name.render()!r} -> {b.bridged_class} (js enabled: {b.js_enabled.value})")
        for m in b.methods:
            print(f"  callable from JS: {m.name}{m.signature} returns sensitive data: {m.returns_sensitive}")
        for f in b.flows:
            print(f"  leak: {f.source} [{f.category}] via {f.method}")
    for u in report.url_entries:
        rec = u.record
        note = " insecure" if rec.insecure_transport else ""
        print(f"loadUrl {rec.raw!r}: {rec.scheme_class.value}{note}")
    for j in report.js_entries:
        for h in j.hits:
            print(f"script {j.snippet.code.strip()!r}: {h.pattern.value} {h.details}")


if __name__ == "__main__":
    main()
