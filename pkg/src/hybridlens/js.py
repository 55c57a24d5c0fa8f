"""Lexical JavaScript analysis: tokenizing, type-2 clone keys, behavior patterns."""

from __future__ import annotations

import enum
import hashlib
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .dataflow import HOLE_TOKEN

logger = logging.getLogger(__name__)


class LexError(Exception):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.message = message
        self.offset = offset


class TokenKind(str, enum.Enum):
    IDENT = "IDENT"
    KEYWORD = "KEYWORD"
    STRING = "STRING"
    NUMBER = "NUMBER"
    PUNCT = "PUNCT"


KEYWORDS = frozenset("""
    await break case catch class const continue debugger default delete do else
    enum export extends false finally for function if implements import in
    instanceof interface let new null package private protected public return
    static super switch this throw true try typeof var void while with yield
""".split())

PUNCTUATORS = sorted("""
    >>>= ... === !== **= <<= >>= >>> &&= ||= ??= => == != <= >= && || ?? ?. ++ --
    += -= *= /= %= &= |= ^= << >> ** { } ( ) [ ] ; , < > + - * / % & | ^ ! ~ ? : = . @ #
""".split(), key=len, reverse=True)

# a '/' after these starts a regular expression literal
_REGEX_AFTER_PUNCT = set("(,=:[!&|?{};+-*%<>~^")
_REGEX_AFTER_KEYWORD = {"return", "typeof", "case", "do", "else", "in", "instanceof",
                        "new", "delete", "void", "throw", "yield", "await"}

_IDENT_START_RE = re.compile(r"[A-Za-z_$]|[^\x00-\x7f]")
_IDENT_RE = re.compile(r"(?:[\w$]|[^\x00-\x7f])+")
_NUMBER_RE = re.compile(
    r"0[xX][0-9a-fA-F_]+n?|0[oO][0-7_]+n?|0[bB][01_]+n?|"
    r"(?:\d[\d_]*\.?[\d_]*|\.\d[\d_]*)(?:[eE][+-]?\d+)?n?"
)


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    start: int = 0

    def as_pair(self) -> tuple:
        return (self.kind.value, self.text)


def _scan_quoted(src: str, i: int, quote: str) -> int:
    """Index just past the closing quote of a string starting at ``i``."""
    j = i + 1
    n = len(src)
    while j < n:
        c = src[j]
        if c == "\\":
            j += 2
            continue
        if c == quote:
            return j + 1
        if c in "\n\r" and quote != "`":
            break
        j += 1
    raise LexError("unterminated string", i)


def _scan_regex(src: str, i: int) -> int:
    j = i + 1
    n = len(src)
    in_class = False
    while j < n:
        c = src[j]
        if c == "\\":
            j += 2
            continue
        if c in "\n\r":
            break
        if c == "[":
            in_class = True
        elif c == "]":
            in_class = False
        elif c == "/" and not in_class:
            j += 1
            while j < n and (src[j].isalnum() or src[j] in "_$"):
                j += 1
            return j
        j += 1
    raise LexError("unterminated regular expression", i)


def _regex_allowed(prev: Optional[Token]) -> bool:
    if prev is None:
        return True
    if prev.kind is TokenKind.PUNCT:
        return prev.text[-1] in _REGEX_AFTER_PUNCT and prev.text not in (")", "]", "}", "++", "--")
    if prev.kind is TokenKind.KEYWORD:
        return prev.text in _REGEX_AFTER_KEYWORD
    return False


def lex(src: str) -> tuple[list, bool]:
    """Tokenize ``src``; returns (tokens, saw_hole_outside_strings)."""
    tokens: list[Token] = []
    hole = False
    i = 0
    n = len(src)
    while i < n:
        c = src[i]
        if c.isspace() or c == "﻿":
            i += 1
            continue
        if src.startswith(HOLE_TOKEN, i):
            hole = True
            i += len(HOLE_TOKEN)
            continue
        if src.startswith("//", i):
            j = i
            while j < n and src[j] not in "\n\r":
                j += 1
            i = j
            continue
        if src.startswith("/*", i):
            j = src.find("*/", i + 2)
            if j < 0:
                raise LexError("unterminated comment", i)
            i = j + 2
            continue
        prev = tokens[-1] if tokens else None
        if c in "'\"`":
            j = _scan_quoted(src, i, c)
            tokens.append(Token(TokenKind.STRING, src[i:j], i))
            i = j
            continue
        if c == "/" and _regex_allowed(prev):
            j = _scan_regex(src, i)
            tokens.append(Token(TokenKind.STRING, src[i:j], i))
            i = j
            continue
        if c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
            m = _NUMBER_RE.match(src, i)
            tokens.append(Token(TokenKind.NUMBER, m.group(0), i))
            i = m.end()
            continue
        if _IDENT_START_RE.match(c):
            m = _IDENT_RE.match(src, i)
            word = m.group(0)
            kind = TokenKind.KEYWORD if word in KEYWORDS else TokenKind.IDENT
            tokens.append(Token(kind, word, i))
            i = m.end()
            continue
        for p in PUNCTUATORS:
            if src.startswith(p, i):
                tokens.append(Token(TokenKind.PUNCT, p, i))
                i += len(p)
                break
        else:
            tokens.append(Token(TokenKind.PUNCT, c, i))
            i += 1
    return tokens, hole


_JS_PREFIX_RE = re.compile(r"^\s*javascript:", re.IGNORECASE)


def strip_js_prefix(raw: str) -> str:
    return _JS_PREFIX_RE.sub("", raw, count=1)


_PLACEHOLDER = {TokenKind.IDENT: "ID", TokenKind.STRING: "STR", TokenKind.NUMBER: "NUM"}


def normalize_tokens(tokens: Iterable) -> list:
    """Abstract identifiers and literals; keywords and punctuation stay verbatim."""
    out = []
    for t in tokens:
        kind, text = (t.kind, t.text) if isinstance(t, Token) else (TokenKind(t[0]), t[1])
        out.append((kind.value, _PLACEHOLDER.get(kind, text)))
    return out


def clone_key_of(normalized: str) -> str:
    return hashlib.sha256(normalized.encode("utf-8")).hexdigest()[:16]


@dataclass
class JsSnippet:
    raw: str
    code: str
    tokens: list
    normalized: str
    clone_key: str
    unresolved: bool = False
    error: Optional[str] = None

    def summary(self) -> dict:
        return {
            "raw": self.raw,
            "clone_key": self.clone_key,
            "token_count": len(self.tokens),
            "unresolved": self.unresolved,
            "error": self.error,
        }

    def to_dict(self) -> dict:
        d = self.summary()
        d["normalized"] = self.normalized
        d["tokens"] = [list(t.as_pair()) for t in self.tokens]
        return d


def _snippet(raw: str, code: str, tokens: list, hole: bool, error: Optional[str] = None) -> JsSnippet:
    normalized = " ".join(text for _, text in normalize_tokens(tokens))
    return JsSnippet(raw=raw, code=code, tokens=tokens, normalized=normalized,
                     clone_key=clone_key_of(normalized), unresolved=hole or error is not None,
                     error=error)


def tokenize_js(raw: str) -> JsSnippet:
    """Tokenize a snippet; raises LexError on unterminated strings or comments."""
    code = strip_js_prefix(raw)
    tokens, hole = lex(code)
    return _snippet(raw, code, tokens, hole)


def snippet_or_unresolved(raw: str) -> JsSnippet:
    """Like tokenize_js but records lexing failures as an unresolved snippet."""
    try:
        return tokenize_js(raw)
    except LexError as exc:
        return _snippet(raw, strip_js_prefix(raw), [], True, str(exc))


def render_tokens(tokens: Iterable) -> str:
    return " ".join(t.text for t in tokens)


# ---------------------------------------------------------------------------
# clone groups

@dataclass
class CloneGroup:
    clone_key: str
    members: list  # (app_id, call-site dict or label)
    representative: str
    normalized: str = ""

    def to_dict(self) -> dict:
        return {
            "clone_key": self.clone_key,
            "size": len(self.members),
            "apps": sorted({m[0] for m in self.members}),
            "members": [{"app_id": a, "site": s} for a, s in self.members],
            "representative": self.representative,
        }


def _site_sort_key(site) -> str:
    if isinstance(site, dict):
        return f"{site.get('class', '')}|{site.get('method', '')}|{site.get('index', 0):08d}"
    return str(site)


def group_clones(items: Iterable) -> list:
    """Group (app_id, site, snippet) triples by clone key.

    Ordered by group size (largest first) then key; unresolved snippets are
    left out because their token stream is incomplete.
    """
    groups: dict = {}
    for app_id, site, snip in items:
        if snip.unresolved:
            continue
        groups.setdefault(snip.clone_key, []).append((app_id, site, snip))
    out = []
    for key, members in groups.items():
        members.sort(key=lambda m: (m[0], _site_sort_key(m[1]), m[2].raw))
        out.append(CloneGroup(
            clone_key=key,
            members=[(a, s) for a, s, _ in members],
            representative=members[0][2].raw,
            normalized=members[0][2].normalized,
        ))
    out.sort(key=lambda g: (-len(g.members), g.clone_key))
    return out


# ---------------------------------------------------------------------------
# behavior patterns

class Pattern(str, enum.Enum):
    SCRIPT_INJECTION = "SCRIPT_INJECTION"
    SCRIPT_INJECTION_INSECURE = "SCRIPT_INJECTION_INSECURE"
    BRIDGE_WRITEBACK = "BRIDGE_WRITEBACK"
    CLICKJACK_TAP_HIGHLIGHT = "CLICKJACK_TAP_HIGHLIGHT"
    IIFE_BRIDGE_ONLY = "IIFE_BRIDGE_ONLY"
    EVENT_DRIVEN = "EVENT_DRIVEN"
    DOM_ONLY = "DOM_ONLY"
    FORM_SECRET_INJECTION = "FORM_SECRET_INJECTION"


@dataclass(frozen=True)
class PatternHit:
    pattern: Pattern
    span: tuple  # (first token index, last token index)
    evidence: tuple = ()  # sorted (key, value) pairs
    confidence: str = "match"

    @property
    def details(self) -> dict:
        return dict(self.evidence)

    def to_dict(self) -> dict:
        return {"pattern": self.pattern.value, "span": list(self.span),
                "evidence": self.details, "confidence": self.confidence}


EVENT_APIS = frozenset({"createEvent", "initEvent", "dispatchEvent", "addEventListener"})
DOM_APIS = frozenset({"getElementById", "getElementsByTagName", "getElementsByClassName",
                      "getElementsByName", "querySelector", "querySelectorAll"})
BROWSER_GLOBALS = frozenset({
    "document", "location", "navigator", "console", "history", "localStorage",
    "sessionStorage", "screen", "JSON", "Math", "parent", "top", "self", "frames",
    "opener", "performance", "crypto", "setTimeout", "setInterval", "alert",
    "prompt", "confirm", "open", "close", "postMessage", "addEventListener",
    "removeEventListener", "dispatchEvent", "scrollTo", "scrollBy", "getComputedStyle",
    "fetch", "XMLHttpRequest", "Object", "Array", "String", "Number", "Promise",
})
SECRET_FIELD_RE = re.compile(r"password|pin|code|bankid|email", re.IGNORECASE)
_TRANSPARENT_RE = re.compile(
    r"^\s*(?:rgba\(\s*\d+\s*,\s*\d+\s*,\s*\d+\s*,\s*0*(?:\.0*)?\s*\)|transparent)\s*$",
    re.IGNORECASE,
)
TAP_HIGHLIGHT = "webkittaphighlightcolor"

# identifiers the matchers key off; renaming them changes pattern results
API_IDENTIFIERS = frozenset(
    EVENT_APIS | DOM_APIS | BROWSER_GLOBALS |
    {"window", "createElement", "src", "value", "webkitTapHighlightColor", "style"}
)

_JS_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "b": "\b", "f": "\f", "v": "\v", "0": "\0"}


def string_value(token: Token) -> str:
    """Decoded contents of a STRING token (regex literals returned verbatim)."""
    text = token.text
    if not text or text[0] not in "'\"`":
        return text
    body = text[1:-1]
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c != "\\" or i + 1 >= len(body):
            out.append(c)
            i += 1
            continue
        n = body[i + 1]
        if n in _JS_ESCAPES:
            out.append(_JS_ESCAPES[n])
            i += 2
        elif n == "x" and re.fullmatch(r"[0-9a-fA-F]{2}", body[i + 2:i + 4]):
            out.append(chr(int(body[i + 2:i + 4], 16)))
            i += 4
        elif n == "u" and body[i + 2:i + 3] == "{":
            end = body.find("}", i)
            out.append(chr(int(body[i + 3:end], 16)))
            i = end + 1
        elif n == "u" and re.fullmatch(r"[0-9a-fA-F]{4}", body[i + 2:i + 6]):
            out.append(chr(int(body[i + 2:i + 6], 16)))
            i += 6
        elif n in "\r\n":
            i += 2
        else:
            out.append(n)
            i += 2
    return "".join(out)


def _is(tok: Optional[Token], kind: TokenKind, text: Optional[str] = None) -> bool:
    return tok is not None and tok.kind is kind and (text is None or tok.text == text)


def _p(tok: Optional[Token], text: str) -> bool:
    return _is(tok, TokenKind.PUNCT, text)


def _matching(tokens: list, i: int) -> int:
    """Index of the bracket closing the one at ``i`` or -1."""
    pairs = {"(": ")", "[": "]", "{": "}"}
    open_t = tokens[i].text
    close_t = pairs[open_t]
    depth = 0
    for j in range(i, len(tokens)):
        t = tokens[j]
        if t.kind is TokenKind.PUNCT:
            if t.text == open_t:
                depth += 1
            elif t.text == close_t:
                depth -= 1
                if depth == 0:
                    return j
    return -1


def _at(tokens: list, i: int) -> Optional[Token]:
    return tokens[i] if 0 <= i < len(tokens) else None


def _script_injection(tokens: list) -> list:
    hits = []
    created = None
    for i, t in enumerate(tokens):
        if _is(t, TokenKind.IDENT, "createElement") and _p(_at(tokens, i + 1), "(") and \
                _is(_at(tokens, i + 2), TokenKind.STRING) and \
                string_value(tokens[i + 2]).lower() == "script":
            created = i
            break
    if created is None:
        return hits
    for i in range(created, len(tokens)):
        if _p(tokens[i], ".") and _is(_at(tokens, i + 1), TokenKind.IDENT, "src") and \
                _p(_at(tokens, i + 2), "="):
            src_tok = _at(tokens, i + 3)
            url = string_value(src_tok) if _is(src_tok, TokenKind.STRING) else None
            span = (created, i + 3 if url is not None else i + 2)
            ev = (("src", url),) if url is not None else ()
            hits.append(PatternHit(Pattern.SCRIPT_INJECTION, span, ev))
            if url is not None and url.lower().startswith("http://"):
                hits.append(PatternHit(Pattern.SCRIPT_INJECTION_INSECURE, span, ev))
            break
    return hits


def _bridge_writeback(tokens: list, bridge_names: set) -> list:
    hits = []
    seen = set()
    for i, t in enumerate(tokens):
        if t.kind is not TokenKind.IDENT or _p(_at(tokens, i - 1), "."):
            continue
        if t.text == "window":
            name_i = i + 2
            if not (_p(_at(tokens, i + 1), ".") and _is(_at(tokens, name_i), TokenKind.IDENT)):
                continue
        elif t.text in bridge_names:
            name_i = i
        else:
            continue
        name = tokens[name_i].text
        fn = _at(tokens, name_i + 2)
        if not (_p(_at(tokens, name_i + 1), ".") and _is(fn, TokenKind.IDENT) and
                _p(_at(tokens, name_i + 3), "(")):
            continue
        if name in bridge_names:
            confidence = "bridge"
        elif t.text == "window" and name not in BROWSER_GLOBALS:
            confidence = "heuristic"
        else:
            continue
        if (name, fn.text) in seen:
            continue
        seen.add((name, fn.text))
        hits.append(PatternHit(Pattern.BRIDGE_WRITEBACK, (i, name_i + 3),
                               (("bridge", name), ("method", fn.text)), confidence))
    return hits


def _tap_highlight(tokens: list) -> list:
    hits = []
    for i, t in enumerate(tokens):
        target = None
        if t.kind is TokenKind.IDENT and t.text.lower().endswith(TAP_HIGHLIGHT):
            target = i
            eq = i + 1
        elif t.kind is TokenKind.STRING and string_value(t).lower() == TAP_HIGHLIGHT and \
                _p(_at(tokens, i - 1), "[") and _p(_at(tokens, i + 1), "]"):
            target = i
            eq = i + 2
        if target is None or not _p(_at(tokens, eq), "="):
            continue
        val = _at(tokens, eq + 1)
        if _is(val, TokenKind.STRING) and _TRANSPARENT_RE.match(string_value(val)):
            hits.append(PatternHit(Pattern.CLICKJACK_TAP_HIGHLIGHT, (target, eq + 1),
                                   (("property", t.text if t.kind is TokenKind.IDENT else string_value(t)),
                                    ("value", string_value(val)))))
    return hits


def _member_call(tokens: list, lo: int, hi: int) -> Optional[tuple]:
    """If tokens[lo:hi] is ``a.b...f(args)`` return (path, end index of ')')."""
    if not _is(_at(tokens, lo), TokenKind.IDENT):
        return None
    path = [tokens[lo].text]
    j = lo + 1
    while j + 1 < hi and _p(tokens[j], ".") and _is(tokens[j + 1], TokenKind.IDENT):
        path.append(tokens[j + 1].text)
        j += 2
    if len(path) < 2 or j >= hi or not _p(tokens[j], "("):
        return None
    close = _matching(tokens, j)
    if close < 0 or close >= hi:
        return None
    return path, close


def _iife_bridge_only(tokens: list) -> list:
    n = len(tokens)
    end = n - 1 if n and _p(tokens[-1], ";") else n
    if end < 8 or not _p(tokens[0], "(") or not _is(tokens[1], TokenKind.KEYWORD, "function"):
        return []
    k = 2
    if _is(_at(tokens, k), TokenKind.IDENT):
        k += 1
    if not _p(_at(tokens, k), "("):
        return []
    params_close = _matching(tokens, k)
    body_open = params_close + 1
    if params_close < 0 or not _p(_at(tokens, body_open), "{"):
        return []
    body_close = _matching(tokens, body_open)
    if body_close < 0:
        return []
    outer_close = _matching(tokens, 0)
    # (function(){...})()  or  (function(){...}())
    if outer_close == body_close + 1:
        if not (_p(_at(tokens, outer_close + 1), "(") and _p(_at(tokens, outer_close + 2), ")")
                and outer_close + 3 == end):
            return []
    elif outer_close == body_close + 3:
        if not (_p(tokens[body_close + 1], "(") and _p(tokens[body_close + 2], ")")
                and outer_close + 1 == end):
            return []
    else:
        return []
    stmt_end = body_close
    if _p(tokens[body_close - 1], ";"):
        stmt_end = body_close - 1
    call = _member_call(tokens, body_open + 1, stmt_end)
    if call is None or call[1] != stmt_end - 1:
        return []
    path = call[0]
    receiver = path[1] if path[0] == "window" and len(path) > 2 else path[0]
    if receiver in BROWSER_GLOBALS or receiver == "window":
        return []
    return [PatternHit(Pattern.IIFE_BRIDGE_ONLY, (0, end - 1),
                       (("call", ".".join(path)), ("receiver", receiver)))]


def _event_or_dom(tokens: list) -> list:
    events = [i for i, t in enumerate(tokens) if t.kind is TokenKind.IDENT and t.text in EVENT_APIS]
    if events:
        names = sorted({tokens[i].text for i in events})
        return [PatternHit(Pattern.EVENT_DRIVEN, (events[0], events[-1]),
                           (("apis", ",".join(names)),))]
    dom = [i for i, t in enumerate(tokens)
           if t.kind is TokenKind.IDENT and (t.text in DOM_APIS or
                                             (t.text == "document" and _p(_at(tokens, i + 1), ".")))]
    if dom:
        names = sorted({tokens[i].text for i in dom})
        return [PatternHit(Pattern.DOM_ONLY, (dom[0], dom[-1]), (("apis", ",".join(names)),))]
    return []


_STATEMENT_BREAKS = {";", "{", "}"}


def _form_secrets(tokens: list) -> list:
    hits = []
    for i, t in enumerate(tokens):
        if not (_is(t, TokenKind.IDENT, "value") and _p(_at(tokens, i - 1), ".")
                and _p(_at(tokens, i + 1), "=") and _is(_at(tokens, i + 2), TokenKind.STRING)):
            continue
        start = i - 1
        while start > 0 and not (tokens[start - 1].kind is TokenKind.PUNCT and
                                 tokens[start - 1].text in _STATEMENT_BREAKS):
            start -= 1
        names = [string_value(x) if x.kind is TokenKind.STRING else x.text
                 for x in tokens[start:i - 1] if x.kind in (TokenKind.IDENT, TokenKind.STRING)]
        matched = [nm for nm in names if SECRET_FIELD_RE.search(nm)]
        if matched:
            hits.append(PatternHit(Pattern.FORM_SECRET_INJECTION, (start, i + 2),
                                   (("field", matched[-1]), ("path", ".".join(names)))))
    return hits


def classify_patterns(snippet: JsSnippet, bridge_names: Iterable = ()) -> list:
    tokens = snippet.tokens
    names = set(bridge_names)
    hits = []
    hits += _script_injection(tokens)
    hits += _bridge_writeback(tokens, names)
    hits += _tap_highlight(tokens)
    hits += _iife_bridge_only(tokens)
    hits += _event_or_dom(tokens)
    hits += _form_secrets(tokens)
    order = list(Pattern)
    hits.sort(key=lambda h: (order.index(h.pattern), h.span, h.evidence))
    return hits


def injected_urls(hits: Iterable) -> list:
    return [h.details["src"] for h in hits
            if h.pattern is Pattern.SCRIPT_INJECTION and h.details.get("src")]
