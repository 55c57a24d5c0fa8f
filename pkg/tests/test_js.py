import pytest
from hypothesis import given, settings, strategies as st

from hybridlens.js import (
    API_IDENTIFIERS, LexError, Pattern, TokenKind, classify_patterns, group_clones, injected_urls,
    lex, snippet_or_unresolved, tokenize_js,
)

from .conftest import JS
from .oracles.mutants import mutants, rename_identifiers

BRIDGES = {"SynchJS", "HTMLOUT", "Android", "EndingScene"}
FREQUENT = ("facebook_event.js", "htmlout_process_html.js", "vungle_highlight.js", "synchjs_compact.js")
# one fixture per distinct piece of reference code
DISTINCT = ("facebook_event.js", "htmlout_meta_tags.js", "dynamic_script.js", "synchjs_writeback.js",
            "vungle_leak.js", "vungle_highlight.js", "appnext_iife.js", "look_and_feel.js",
            "htmlout_search_results.js", "malware_clickjack.js", "flurry_adapter.js",
            "htmlout_show_html.js")
ADMARVEL = "http://admarvel.s3.amazonaws.com/   js/admarvel_mraid_v2_ complete.js"


def read(name):
    return (JS / name).read_text(encoding="utf-8")


def snippet(name):
    return tokenize_js(read(name))


def patterns(name, bridges=BRIDGES):
    return [h.pattern for h in classify_patterns(snippet(name), bridges)]


def test_empty_snippet_has_no_tokens():
    assert tokenize_js("").tokens == []


def test_string_kinds_and_comments():
    tokens, hole = lex("a = 'x\\'y' + \"q\" /* c */ // tail\n + `t`;")
    assert [t.kind for t in tokens] == [TokenKind.IDENT, TokenKind.PUNCT, TokenKind.STRING, TokenKind.PUNCT,
                                        TokenKind.STRING, TokenKind.PUNCT, TokenKind.STRING, TokenKind.PUNCT]
    assert not hole


@pytest.mark.parametrize("src, kinds", [
    ("x = /ab+c/g;", ["IDENT", "PUNCT", "STRING", "PUNCT"]),
    ("f(/[/]/)", ["IDENT", "PUNCT", "STRING", "PUNCT"]),
    ("a / b / c", ["IDENT", "PUNCT", "IDENT", "PUNCT", "IDENT"]),
    ("(a) / 2", ["PUNCT", "IDENT", "PUNCT", "PUNCT", "NUMBER"]),
    ("return /x/.test(s)", ["KEYWORD", "STRING", "PUNCT", "IDENT", "PUNCT", "IDENT", "PUNCT"]),
])
def test_regex_versus_division(src, kinds):
    assert [t.kind.value for t in lex(src)[0]] == kinds


@pytest.mark.parametrize("src", ["'abc", "\"abc\n\"", "/* never closed"])
def test_unterminated_raises_and_is_unresolved(src):
    with pytest.raises(LexError):
        tokenize_js(src)
    s = snippet_or_unresolved(src)
    assert s.unresolved and s.error


def test_hole_outside_string_marks_unresolved():
    assert snippet_or_unresolved("document.title = ⟨?⟩;").unresolved
    assert not snippet_or_unresolved("document.title = '⟨?⟩';").unresolved


def test_javascript_prefix_is_stripped():
    assert tokenize_js("JavaScript:alert(1)").clone_key == tokenize_js("alert(1)").clone_key


def test_facebook_event_name_is_a_string_token():
    toks = snippet("facebook_event.js").tokens
    assert (TokenKind.STRING, "'fbPlatformDialogMustClose'") in [t.as_pair() for t in toks]


def test_normalization_keeps_keywords_and_punctuation():
    s = tokenize_js("var a = 1; return b('x');")
    assert s.normalized == "var ID = NUM ; return ID ( STR ) ;"


def test_whitespace_variants_share_a_key():
    assert snippet("facebook_event.js").clone_key == snippet("facebook_event_variant.js").clone_key
    assert snippet("synchjs_compact.js").clone_key == snippet("synchjs_writeback.js").clone_key


@pytest.mark.parametrize("name", FREQUENT)
def test_renamed_mutants_share_clone_key(name):
    key = snippet(name).clone_key
    ms = mutants(read(name), count=10)
    assert len(set(ms)) == 10 and read(name) not in ms
    assert [tokenize_js(m).clone_key for m in ms] == [key] * 10


def test_distinct_snippets_have_distinct_keys():
    keys = [snippet(n).clone_key for n in DISTINCT]
    assert len(set(keys)) == len(DISTINCT)


@pytest.mark.parametrize("names", [
    ("htmlout_meta_tags.js", "dynamic_script.js", "synchjs_writeback.js", "vungle_leak.js"),
    ("facebook_event.js", "dynamic_script.js", "synchjs_writeback.js", "vungle_leak.js"),
])
def test_four_distinct_snippets_make_four_groups(names):
    groups = group_clones(("app", n, snippet(n)) for n in names)
    assert len(groups) == 4


def test_group_ordering_and_membership():
    items = [("a", "s1", snippet("facebook_event.js")), ("b", "s2", snippet("facebook_event_variant.js")),
             ("c", "s3", tokenize_js(mutants(read("facebook_event.js"), count=1)[0])),
             ("a", "s4", snippet("look_and_feel.js")), ("a", "s5", snippet_or_unresolved("'open"))]
    groups = group_clones(items)
    assert [len(g.members) for g in groups] == [3, 1]
    d = groups[0].to_dict()
    assert d["size"] == 3 and d["apps"] == ["a", "b", "c"]


def test_script_injection_insecure_with_admarvel_url():
    hits = classify_patterns(snippet("dynamic_script.js"))
    assert [h.pattern for h in hits] == [Pattern.SCRIPT_INJECTION, Pattern.SCRIPT_INJECTION_INSECURE,
                                         Pattern.DOM_ONLY]
    assert hits[1].details["src"] == ADMARVEL
    assert injected_urls(hits) == [ADMARVEL]


def test_https_script_is_not_insecure():
    s = tokenize_js("var s=document.createElement('script'); s.src='https://x.example/a.js';")
    assert Pattern.SCRIPT_INJECTION_INSECURE not in [h.pattern for h in classify_patterns(s)]


@pytest.mark.parametrize("name, bridge, method", [
    ("synchjs_writeback.js", "SynchJS", "setValue"),
    ("synchjs_compact.js", "SynchJS", "setValue"),
    ("htmlout_process_html.js", "HTMLOUT", "processHTML"),
    ("htmlout_meta_tags.js", "HTMLOUT", "processJSON"),
    ("htmlout_show_html.js", "HTMLOUT", "showHTML"),
])
def test_bridge_writeback(name, bridge, method):
    (hit,) = [h for h in classify_patterns(snippet(name), BRIDGES) if h.pattern is Pattern.BRIDGE_WRITEBACK]
    assert hit.details == {"bridge": bridge, "method": method}
    assert hit.confidence == "bridge"


def test_window_receiver_without_known_bridge_is_heuristic():
    (hit,) = classify_patterns(tokenize_js("window.Foo.bar(1);"), set())
    assert hit.pattern is Pattern.BRIDGE_WRITEBACK and hit.confidence == "heuristic"


@pytest.mark.parametrize("name, prop", [
    ("vungle_highlight.js", "webkitTapHighlightColor"),
    ("vungle_leak.js", "stylewebkitTapHighlightColor"),
    ("malware_clickjack.js", "webkitTapHighlightColor"),
])
def test_clickjack_tap_highlight(name, prop):
    (hit,) = [h for h in classify_patterns(snippet(name)) if h.pattern is Pattern.CLICKJACK_TAP_HIGHLIGHT]
    assert hit.details == {"property": prop, "value": "rgba(0,0,0,0)"}


def test_visible_highlight_is_not_clickjack():
    s = tokenize_js("document.body.style.webkitTapHighlightColor = 'rgba(0,0,0,0.4)';")
    assert Pattern.CLICKJACK_TAP_HIGHLIGHT not in [h.pattern for h in classify_patterns(s)]


def test_iife_bridge_only():
    (hit,) = classify_patterns(snippet("appnext_iife.js"))
    assert hit.pattern is Pattern.IIFE_BRIDGE_ONLY
    assert hit.details == {"call": "Appnext.Layout.destroy", "receiver": "Appnext"}


def test_event_driven_excludes_dom_only():
    assert patterns("facebook_event.js") == [Pattern.EVENT_DRIVEN]
    assert patterns("look_and_feel.js") == [Pattern.DOM_ONLY]
    assert patterns("flurry_adapter.js") == []


FORM_FILLS = [line for line in read("form_fills.txt").splitlines() if line.strip()]


@pytest.mark.parametrize("row", FORM_FILLS)
def test_form_secret_rows(row):
    got = [h.pattern for h in classify_patterns(tokenize_js(row))]
    assert got == [Pattern.DOM_ONLY, Pattern.FORM_SECRET_INJECTION]


def test_non_secret_field_is_not_flagged():
    s = tokenize_js("document.form1.city.value = 'x';")
    assert Pattern.FORM_SECRET_INJECTION not in [h.pattern for h in classify_patterns(s)]


# Pattern results do not depend on names the matchers do not key off.
# Bridge names and tap-highlight properties are kept; evidence echoes
# whatever names it saw, so it is compared through the rename map.
KEEP = API_IDENTIFIERS | BRIDGES


def keep_for(src):
    return KEEP | {t.text for t in lex(src)[0]
                   if t.kind is TokenKind.IDENT and "webkittaphighlightcolor" in t.text.lower()}


def shape(hits):
    return [(h.pattern, h.span, h.confidence) for h in hits]


@pytest.mark.parametrize("name", DISTINCT)
def test_patterns_survive_renaming(name):
    src = read(name)
    base = classify_patterns(snippet(name), BRIDGES)
    for seed in range(5):
        out, mapping = rename_identifiers(src, seed, keep=keep_for(src), literals=False)
        hits = classify_patterns(tokenize_js(out), BRIDGES)
        assert shape(hits) == shape(base)
        for h, b in zip(hits, base):
            renamed = {k: ".".join(mapping.get(p, p) for p in v.split(".")) for k, v in b.details.items()}
            assert h.details == renamed


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet=st.sampled_from(list("ab1 '\"/\\*`=.(){};\n+-<>!?:⟨⟩"))))
def test_lexer_total(src):
    s = snippet_or_unresolved(src)
    assert len(s.clone_key) == 16
    assert s.unresolved or s.error is None
