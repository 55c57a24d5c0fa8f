import pytest

from hybridlens.bridges import (
    UNKNOWN_CLASS, ConfigError, JsEnabled, SensitiveSourceDB, analyze_bridges, app_flags,
)
from hybridlens.smali import SmaliProgram, load_program, parse_smali_class

from .conftest import APPS

LEAKER = "Lcom/example/leaky/Leaker;"
ADD_JS = "invoke-virtual {v0, v1, v2}, Landroid/webkit/WebView;->addJavascriptInterface(Ljava/lang/Object;Ljava/lang/String;)V\n"


def program(*texts):
    classes = [parse_smali_class(t) for t in texts]
    return SmaliProgram("synthetic", {c.descriptor: c for c in classes})


def activity(body):
    return (".class public La/Main;\n.super Landroid/app/Activity;\n"
            ".method public go(Landroid/webkit/WebView;Z)V\n.locals 4\n"
            f"move-object v0, p1\n{body}\nreturn-void\n.end method\n")


def bridge_class(name, annotated=True):
    ann = ".annotation runtime Landroid/webkit/JavascriptInterface;\n.end annotation\n" if annotated else ""
    return (f".class public {name}\n.super Ljava/lang/Object;\n"
            f".method public hello()Ljava/lang/String;\n.locals 1\n{ann}"
            'const-string v0, "hi"\nreturn-object v0\n.end method\n')


def test_leaky_bridge_and_device_id_flow():
    (b,) = analyze_bridges(load_program(APPS / "leaky_webview"))
    assert b.exposed_name.value == "Android"
    assert b.bridged_class == LEAKER
    assert b.js_enabled is JsEnabled.YES
    assert [m.name for m in b.methods] == ["showToast"]
    assert b.methods[0].returns_sensitive
    (flow,) = b.flows
    assert flow.category == "Device ID"
    assert flow.source == "Landroid/telephony/TelephonyManager;->getDeviceId"
    assert flow.method == f"{LEAKER}->showToast(Ljava/lang/String;)Ljava/lang/String;"


def test_discarded_source_is_not_a_flow():
    (b,) = analyze_bridges(load_program(APPS / "discarded_source"))
    by_name = {m.name: m for m in b.methods}
    assert not by_name["deviceToken"].returns_sensitive
    assert [str(s) for s in by_name["deviceToken"].sources_hit] == [
        "Landroid/telephony/TelephonyManager;->getDeviceId"]
    assert b.flows == []
    assert b.js_enabled is JsEnabled.UNKNOWN


def test_endingscene_literal_return_has_no_flow():
    (b,) = analyze_bridges(load_program(APPS / "endingscene"))
    assert b.exposed_name.value == "EndingScene"
    assert b.bridged_class == "Lcom/endingscene/game/SceneBridge;"
    assert b.flows == []


def test_unannotated_methods_are_not_exposed():
    prog = program(activity("new-instance v1, La/Br;\ninvoke-direct {v1}, La/Br;-><init>()V\n"
                            'const-string v2, "X"\n' + ADD_JS), bridge_class("La/Br;", annotated=False))
    (b,) = analyze_bridges(prog)
    assert b.bridged_class == "La/Br;"
    assert b.methods == []


def test_tied_candidates_give_unknown_class():
    prog = program(activity("if-eqz p2, :a\nnew-instance v1, La/One;\ngoto :b\n:a\nnew-instance v1, La/Two;\n:b\n"
                            'const-string v2, "X"\n' + ADD_JS),
                   bridge_class("La/One;"), bridge_class("La/Two;"))
    (b,) = analyze_bridges(prog)
    assert b.bridged_class == UNKNOWN_CLASS
    assert sorted(b.class_candidates) == ["La/One;", "La/Two;"]


@pytest.mark.parametrize("setting, expected", [
    ("const/4 v3, 0x1\ninvoke-virtual {v3, v3}, Landroid/webkit/WebSettings;->setJavaScriptEnabled(Z)V\n",
     JsEnabled.YES),
    ("const/4 v3, 0x0\ninvoke-virtual {v3, v3}, Landroid/webkit/WebSettings;->setJavaScriptEnabled(Z)V\n",
     JsEnabled.NO_EVIDENCE),
    ("invoke-virtual {v3, p2}, Landroid/webkit/WebSettings;->setJavaScriptEnabled(Z)V\n", JsEnabled.UNKNOWN),
    ("", JsEnabled.UNKNOWN),
])
def test_js_enabled_states(setting, expected):
    prog = program(activity(setting + "new-instance v1, La/Br;\n"
                            'const-string v2, "X"\n' + ADD_JS), bridge_class("La/Br;"))
    (b,) = analyze_bridges(prog)
    assert b.js_enabled is expected


def test_flags_imply_each_other():
    for app in ("leaky_webview", "endingscene", "sdk_field", "discarded_source"):
        prog = load_program(APPS / app)
        f = app_flags(prog, analyze_bridges(prog))
        assert not f.has_sensitive_flow or f.injects_class
        assert not f.injects_class or f.uses_webview


def test_source_db_rejects_bad_lines():
    with pytest.raises(ConfigError, match="unknown category"):
        SensitiveSourceDB.parse("La/B; m NotACategory\n")
    with pytest.raises(ConfigError, match=":2:"):
        SensitiveSourceDB.parse("# comment\nnot-a-class m Location\n")


def test_default_source_db_has_device_id():
    db = SensitiveSourceDB.default()
    assert any(e.method == "getDeviceId" and e.category == "Device ID" for e in db.entries)


def test_custom_source_list_changes_flows():
    prog = load_program(APPS / "leaky_webview")
    empty = SensitiveSourceDB.parse("")
    (b,) = analyze_bridges(prog, empty)
    assert b.flows == []
