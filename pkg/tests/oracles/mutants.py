"""Identifier-renamed (type-2) mutants of JavaScript snippets."""

import random

from hybridlens.js import API_IDENTIFIERS, KEYWORDS, TokenKind, lex, strip_js_prefix

_ALPHA = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_$"


def _fresh_name(rng, taken):
    while True:
        size = rng.randint(1, 12)
        name = rng.choice(_ALPHA) + "".join(rng.choice(_ALPHA + "0123456789") for _ in range(size - 1))
        if name not in KEYWORDS and name not in taken:
            taken.add(name)
            return name


def rename_identifiers(src, seed, keep=frozenset(), literals=True):
    """Consistently rename every identifier not in ``keep``.

    With ``literals`` set, numbers and quoted strings get new values too.
    The token shape is unchanged.
    """
    rng = random.Random(seed)
    code = strip_js_prefix(src)
    prefix = src[:len(src) - len(code)]
    tokens, _ = lex(code)
    taken = {t.text for t in tokens} | API_IDENTIFIERS
    mapping = {}
    edits = []
    for t in tokens:
        if t.kind is TokenKind.IDENT and t.text not in keep:
            if t.text not in mapping:
                mapping[t.text] = _fresh_name(rng, taken)
            edits.append((t.start, len(t.text), mapping[t.text]))
        elif literals and t.kind is TokenKind.NUMBER:
            edits.append((t.start, len(t.text), str(rng.randint(0, 10_000))))
        elif literals and t.kind is TokenKind.STRING and t.text[0] in "'\"":
            body = "".join(rng.choice("abcxyz0189 -_") for _ in range(rng.randint(0, 10)))
            edits.append((t.start, len(t.text), f"{t.text[0]}{body}{t.text[0]}"))
    out = code
    for start, length, text in sorted(edits, reverse=True):
        out = out[:start] + text + out[start + length:]
    return prefix + out, mapping


def mutants(src, count=10, base_seed=0, **kw):
    return [rename_identifiers(src, base_seed + k, **kw)[0] for k in range(count)]
