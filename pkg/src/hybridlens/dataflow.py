"""Intraprocedural def-use analysis, backward slicing and string evaluation.

Builder objects (``StringBuilder``/``StringBuffer`` and explicitly allocated
``String``) are tracked per allocation site. Each site ``k`` gets a
pseudo-register ``@k`` that is defined by every call that initialises or
mutates the object, so ordinary reaching definitions cover in-place
``append`` calls whose result is discarded.
"""

from __future__ import annotations

import enum
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

from .smali import (
    RESULT, FieldRef, Instruction, MethodRef, Opcode, SmaliMethod, SmaliProgram,
)

logger = logging.getLogger(__name__)

HOLE_TOKEN = "⟨?⟩"
MAX_VARIANTS = 8
ENTRY = -1  # pseudo definition site for parameters at method entry

STRING = "Ljava/lang/String;"
CHAR_SEQUENCE = "Ljava/lang/CharSequence;"
OBJECT = "Ljava/lang/Object;"
BUILDERS = ("Ljava/lang/StringBuilder;", "Ljava/lang/StringBuffer;")
TRACKED = BUILDERS + (STRING,)
STRING_LIKE = (STRING, CHAR_SEQUENCE)

# builder methods that only read the receiver
_PURE_BUILDER_METHODS = {
    "toString", "length", "charAt", "indexOf", "lastIndexOf", "substring",
    "capacity", "codePointAt", "codePointBefore", "codePointCount", "subSequence",
    "getChars", "equals", "hashCode", "compareTo", "chars", "codePoints",
}


class SliceError(Exception):
    pass


# ---------------------------------------------------------------------------
# string lattice

@dataclass(frozen=True)
class Hole:
    origin: str
    marker: Optional[tuple] = field(default=None, compare=True, repr=False)

    def __str__(self) -> str:
        return HOLE_TOKEN


class Kind(str, enum.Enum):
    CONSTANT = "CONSTANT"
    TEMPLATE = "TEMPLATE"
    UNKNOWN = "UNKNOWN"


def normalize_parts(parts: Iterable) -> tuple:
    """Merge adjacent literals and drop empty ones."""
    out: list = []
    for p in parts:
        if isinstance(p, str):
            if not p:
                continue
            if out and isinstance(out[-1], str):
                out[-1] = out[-1] + p
                continue
        out.append(p)
    return tuple(out)


@dataclass(frozen=True)
class ResolvedString:
    parts: tuple

    @classmethod
    def constant(cls, text: str) -> "ResolvedString":
        return cls(normalize_parts([text]))

    @classmethod
    def unknown(cls, origin: str) -> "ResolvedString":
        return cls((Hole(origin),))

    @property
    def kind(self) -> Kind:
        holes = sum(1 for p in self.parts if isinstance(p, Hole))
        if holes == 0:
            return Kind.CONSTANT
        if len(self.parts) == 1:
            return Kind.UNKNOWN
        return Kind.TEMPLATE

    @property
    def is_constant(self) -> bool:
        return self.kind is Kind.CONSTANT

    @property
    def value(self) -> Optional[str]:
        return self.render() if self.is_constant else None

    @property
    def holes(self) -> list:
        return [p for p in self.parts if isinstance(p, Hole)]

    @property
    def origins(self) -> list:
        return [h.origin for h in self.holes]

    @property
    def literal_prefix(self) -> str:
        out = []
        for p in self.parts:
            if isinstance(p, Hole):
                break
            out.append(p)
        return "".join(out)

    def render(self) -> str:
        return "".join(HOLE_TOKEN if isinstance(p, Hole) else p for p in self.parts)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "rendered": self.render(),
            "parts": [{"hole": p.origin} if isinstance(p, Hole) else {"text": p}
                      for p in self.parts],
        }

    def __str__(self) -> str:
        return self.render()


# ---------------------------------------------------------------------------
# call sites

@dataclass(frozen=True)
class MethodPattern:
    cls: str  # descriptor or "*"
    name: str
    arity: int

    @classmethod
    def parse(cls, text: str) -> "MethodPattern":
        """Parse ``Lpkg/Cls;->name/arity`` or ``*->name/arity``."""
        m = re.match(r"^(\*|L[^;]+;)->([^/\s]+)/(\d+)$", text.strip())
        if not m:
            raise ValueError(f"bad method pattern {text!r}")
        return cls(m.group(1), m.group(2), int(m.group(3)))

    def matches(self, ref: MethodRef, program: Optional[SmaliProgram] = None) -> bool:
        if ref.name != self.name or ref.arity != self.arity:
            return False
        if self.cls == "*" or ref.cls == self.cls:
            return True
        # calls through an in-app subclass of the target class
        return program is not None and ref.cls in program.classes and \
            program.is_subclass(ref.cls, self.cls)

    def __str__(self) -> str:
        return f"{self.cls}->{self.name}/{self.arity}"


WEBVIEW = "Landroid/webkit/WebView;"
WEBSETTINGS = "Landroid/webkit/WebSettings;"

LOAD_URL = (MethodPattern(WEBVIEW, "loadUrl", 1), MethodPattern(WEBVIEW, "loadUrl", 2))
EVALUATE_JS = (MethodPattern(WEBVIEW, "evaluateJavascript", 2),)
ADD_JS_INTERFACE = (MethodPattern(WEBVIEW, "addJavascriptInterface", 2),)
SET_JS_ENABLED = (MethodPattern(WEBSETTINGS, "setJavaScriptEnabled", 1),)
DEFAULT_TARGETS = LOAD_URL + EVALUATE_JS + ADD_JS_INTERFACE + SET_JS_ENABLED


@dataclass(frozen=True)
class CallSite:
    cls: str
    method: SmaliMethod = field(compare=False, hash=False, repr=False)
    method_name: str
    method_signature: str
    index: int
    callee: MethodRef
    receiver: Optional[str]
    arg_registers: tuple

    @property
    def instruction(self) -> Instruction:
        return self.method.body[self.index]

    def to_dict(self) -> dict:
        return {
            "class": self.cls,
            "method": self.method_name + self.method_signature,
            "index": self.index,
            "callee": str(self.callee),
        }


def find_call_sites(program: SmaliProgram, targets) -> list[CallSite]:
    targets = list(targets)
    sites = []
    for cls, method in program.iter_methods():
        for ins in method.body:
            if not ins.opcode.is_invoke:
                continue
            if any(p.matches(ins.method, program) for p in targets):
                sites.append(CallSite(
                    cls=cls.descriptor, method=method, method_name=method.name,
                    method_signature=method.signature, index=ins.index,
                    callee=ins.method, receiver=ins.receiver,
                    arg_registers=ins.arg_registers,
                ))
    return sites


# ---------------------------------------------------------------------------
# per-method analysis

def _successors(method: SmaliMethod) -> list[list[int]]:
    body = method.body
    n = len(body)
    succ: list[list[int]] = []
    for ins in body:
        i = ins.index
        op = ins.opcode
        if op is Opcode.GOTO:
            targets = [method.labels[ins.target]]
        elif op.is_return or (op is Opcode.OPAQUE and ins.mnemonic == "throw"):
            targets = []
        elif op in (Opcode.IF, Opcode.IFZ):
            targets = [i + 1, method.labels[ins.target]]
        elif op is Opcode.SWITCH:
            targets = [i + 1] + [method.labels[t] for t in method.switch_tables[ins.target]]
        else:
            targets = [i + 1]
        succ.append(sorted({t for t in targets if t < n}))
    return succ


def _handler_ranges(method: SmaliMethod) -> list[tuple]:
    """(first, last_exclusive, handler) index triples for each catch block."""
    out = []
    for start, end, handler in method.catches:
        h = method.labels[handler]
        if h < len(method.body):
            out.append((method.labels[start], method.labels[end], h))
    return out


def _join(a: dict, b: dict) -> dict:
    if not a:
        return dict(b)
    out = dict(a)
    for k, v in b.items():
        cur = out.get(k)
        out[k] = v if cur is None else (cur | v)
    return out


def _forward(method: SmaliMethod, entry: dict, transfer) -> list[dict]:
    """Generic forward may-analysis over register->frozenset states.

    Returns the IN state of every instruction. Catch handlers receive both
    the IN and OUT states of each protected instruction.
    """
    n = len(method.body)
    if n == 0:
        return []
    succ = _successors(method)
    extra: list[list[int]] = [[] for _ in range(n)]
    for lo, hi, h in _handler_ranges(method):
        for i in range(lo, min(hi, n)):
            extra[i].append(h)
    ins_state: list[Optional[dict]] = [None] * n
    ins_state[0] = dict(entry)
    work = [0]
    queued = {0}
    while work:
        i = work.pop()
        queued.discard(i)
        before = ins_state[i]
        after = transfer(i, before)
        for s, st in [(s, after) for s in succ[i]] + [(h, _join(before, after)) for h in extra[i]]:
            old = ins_state[s]
            new = st if old is None else _join(old, st)
            if old is None or new != old:
                ins_state[s] = new
                if s not in queued:
                    queued.add(s)
                    work.append(s)
    return [st if st is not None else {} for st in ins_state]


@dataclass(frozen=True)
class _Effects:
    defs: frozenset  # strong definitions (kill)
    weak: frozenset  # weak definitions (no kill)
    uses: frozenset


def _obj_reg(site: int) -> str:
    return f"@{site}"


class MethodAnalysis:
    """Points-to facts, extended def/use sets and reaching definitions."""

    def __init__(self, method: SmaliMethod):
        self.method = method
        self.body = method.body
        self.param_regs = [r for r, _ in method.params]
        self.points_to_in = _forward(method, {}, self._pts_transfer)
        self.effects = [self._effects(ins) for ins in self.body]
        entry = {r: frozenset([ENTRY]) for r in self.param_regs}
        self.rd_in = _forward(method, entry, self._rd_transfer)

    # points-to over tracked allocation sites
    def _pts_transfer(self, i: int, state: dict) -> dict:
        ins = self.body[i]
        out = dict(state)
        op = ins.opcode
        if op is Opcode.NEW_INSTANCE:
            out[ins.operands[0]] = frozenset([i]) if ins.type_desc in TRACKED else frozenset()
            return out
        if op is Opcode.MOVE_OBJECT:
            out[ins.operands[0]] = state.get(ins.operands[1], frozenset())
            return out
        if op is Opcode.CHECK_CAST:
            return out
        if op is Opcode.MOVE_RESULT_OBJECT:
            out[ins.operands[0]] = state.get(RESULT, frozenset())
            return out
        if op.is_invoke:
            ref = ins.method
            if ref.cls in BUILDERS and ins.receiver and ref.return_type == ref.cls:
                out[RESULT] = state.get(ins.receiver, frozenset())
            elif RESULT in ins.defs:
                out[RESULT] = frozenset()
            return out
        for d in ins.defs:
            out[d] = frozenset()
        return out

    def points_to(self, index: int, register: str) -> frozenset:
        return self.points_to_in[index].get(register, frozenset())

    def _effects(self, ins: Instruction) -> _Effects:
        defs = set(ins.defs)
        weak: set = set()
        uses = set(ins.uses)
        if ins.opcode is Opcode.NEW_INSTANCE and ins.type_desc in TRACKED:
            defs.add(_obj_reg(ins.index))
        elif ins.opcode is Opcode.MOVE_RESULT or ins.opcode is Opcode.MOVE_RESULT_OBJECT:
            pass
        elif ins.opcode.is_invoke:
            pts = self.points_to_in[ins.index]
            ref = ins.method
            for pos, reg in enumerate(ins.operands):
                objs = pts.get(reg, frozenset())
                if not objs:
                    continue
                regs = {_obj_reg(o) for o in objs}
                uses |= regs
                is_receiver = reg == ins.receiver and pos == 0
                if ref.cls == STRING:
                    # String is immutable and never mutates its arguments
                    mutates = False
                elif is_receiver and ref.cls in BUILDERS:
                    mutates = ref.name not in _PURE_BUILDER_METHODS
                else:
                    # builders never mutate their arguments
                    mutates = ref.cls not in BUILDERS
                if mutates:
                    (defs if len(objs) == 1 else weak).update(regs)
        return _Effects(frozenset(defs), frozenset(weak - defs), frozenset(uses))

    def _rd_transfer(self, i: int, state: dict) -> dict:
        eff = self.effects[i]
        if not eff.defs and not eff.weak:
            return state
        out = dict(state)
        mine = frozenset([i])
        for d in eff.defs:
            out[d] = mine
        for d in eff.weak:
            out[d] = out.get(d, frozenset()) | mine
        return out

    def reaching_defs(self, index: int, register: str) -> list[int]:
        return sorted(self.rd_in[index].get(register, frozenset()))

    def defines(self, index: int, register: str) -> bool:
        eff = self.effects[index]
        return register in eff.defs or register in eff.weak


_CACHE: dict = {}
_CACHE_LIMIT = 512


def analyze_method(method: SmaliMethod) -> MethodAnalysis:
    key = id(method)
    hit = _CACHE.get(key)
    if hit is not None and hit[0] is method:
        return hit[1]
    if len(_CACHE) >= _CACHE_LIMIT:
        _CACHE.clear()
    ma = MethodAnalysis(method)
    _CACHE[key] = (method, ma)
    return ma


# ---------------------------------------------------------------------------
# slicing

@dataclass(frozen=True)
class Slice:
    index: int
    register: str
    instructions: tuple  # sorted body indices
    reaches_entry: tuple = ()  # parameter registers whose entry value flows in
    opaque: tuple = ()  # OPAQUE members (unknown-origin definitions)
    root: Optional[CallSite] = None

    def __contains__(self, index: int) -> bool:
        return index in self.instructions


def backward_slice(method: SmaliMethod, index: int, register: str,
                   root: Optional[CallSite] = None) -> Slice:
    if not 0 <= index < len(method.body):
        raise SliceError(f"index {index} out of range")
    ma = analyze_method(method)
    if register not in ma.effects[index].uses:
        raise SliceError(f"{register} is not used at index {index}")
    members: set = set()
    entry_regs: set = set()
    seen = set()
    work = [(index, register)]
    while work:
        at, reg = work.pop()
        if (at, reg) in seen:
            continue
        seen.add((at, reg))
        for d in ma.reaching_defs(at, reg):
            if d == ENTRY:
                entry_regs.add(reg)
                continue
            if d not in members:
                members.add(d)
                for u in ma.effects[d].uses:
                    work.append((d, u))
    opaque = tuple(sorted(i for i in members if method.body[i].opcode is Opcode.OPAQUE))
    return Slice(index=index, register=register, instructions=tuple(sorted(members)),
                 reaches_entry=tuple(sorted(entry_regs)), opaque=opaque, root=root)


# ---------------------------------------------------------------------------
# string evaluation
#
# Values are tuples: ("s", parts) for strings, ("i", n) for int constants and
# ("o", site) for references to tracked allocation sites.

def _str(*parts) -> tuple:
    return ("s", normalize_parts(parts))


def _hole(origin: str) -> tuple:
    return ("s", (Hole(origin),))


OVERFLOW = _hole("variant-overflow")


def _dedupe(values: Iterable) -> list:
    out = list(dict.fromkeys(values))
    if len(out) > MAX_VARIANTS:
        return [OVERFLOW]
    return out


def _int32(n: int) -> int:
    return (n + 2 ** 31) % 2 ** 32 - 2 ** 31


def _utf16(s: str) -> bytes:
    return s.encode("utf-16-le", "surrogatepass")


def _from_utf16(b: bytes) -> str:
    return b.decode("utf-16-le", "surrogatepass")


def java_trim(s: str) -> str:
    lo, hi = 0, len(s)
    while lo < hi and ord(s[lo]) <= 0x20:
        lo += 1
    while hi > lo and ord(s[hi - 1]) <= 0x20:
        hi -= 1
    return s[lo:hi]


def ascii_lower(s: str) -> str:
    return "".join(chr(ord(c) + 32) if "A" <= c <= "Z" else c for c in s)


def ascii_upper(s: str) -> str:
    return "".join(chr(ord(c) - 32) if "a" <= c <= "z" else c for c in s)


def java_substring(s: str, begin: int, end: Optional[int] = None) -> Optional[str]:
    """Substring over UTF-16 code units; ``None`` where Java would throw."""
    units = _utf16(s)
    length = len(units) // 2
    if end is None:
        end = length
    if begin < 0 or end > length or begin > end:
        return None
    return _from_utf16(units[2 * begin:2 * end])


_FORMAT_SPEC_RE = re.compile(r"%(?:\d+\$)?[-#+ 0,(<]*\d*(?:\.\d+)?(?:[tT])?[a-zA-Z%]")


def format_template(fmt: str) -> Optional[tuple]:
    """Parts for ``String.format(fmt, ...)`` or ``None`` if fmt is malformed."""
    parts: list = []
    pos = 0
    while True:
        j = fmt.find("%", pos)
        if j < 0:
            parts.append(fmt[pos:])
            break
        parts.append(fmt[pos:j])
        m = _FORMAT_SPEC_RE.match(fmt, j)
        if not m:
            return None
        spec = m.group(0)
        if spec == "%%":
            parts.append("%")
        elif spec == "%n":
            parts.append("\n")
        else:
            parts.append(Hole(f"format {spec}"))
        pos = m.end()
    return normalize_parts(parts)


def _has_marker(parts: tuple) -> bool:
    return any(isinstance(p, Hole) and p.marker is not None for p in parts)


def _markers(values: Iterable) -> set:
    out = set()
    for v in values:
        if v[0] == "s":
            out.update(p.marker for p in v[1] if isinstance(p, Hole) and p.marker is not None)
    return out


def _literal_prefix(parts: tuple) -> str:
    out = []
    for p in parts:
        if isinstance(p, Hole):
            break
        out.append(p)
    return "".join(out)


def _collapse_cycle(values: list, key: tuple) -> list:
    """Replace self-referential variants by common literal prefix + loop hole."""
    bare = _hole("loop")
    marker_hole = Hole("loop", key)
    base, cyclic, other = [], [], []
    for v in values:
        if v[0] != "s":
            other.append(v)
        elif v[1] == (marker_hole,):
            continue  # pure copy cycle adds nothing
        elif marker_hole in v[1]:
            cyclic.append(v[1])
        else:
            base.append(v[1])
    if not cyclic:
        return other + [("s", p) for p in base]
    if not base:
        return other + [bare]
    prefix = os.path.commonprefix([_literal_prefix(p) for p in base])
    for _ in range(16):
        unrolled = []
        for parts in cyclic:
            sub = []
            for p in parts:
                if p == marker_hole:
                    sub.extend([prefix, bare[1][0]])
                else:
                    sub.append(p)
            unrolled.append(_literal_prefix(normalize_parts(sub)))
        new = os.path.commonprefix([prefix] + unrolled)
        if new == prefix:
            break
        prefix = new
    return other + [_str(prefix, Hole("loop"))]


class StringEvaluator:
    """Demand-driven partial evaluation of register values in one method."""

    def __init__(self, method: SmaliMethod, program: Optional[SmaliProgram] = None,
                 field_depth: int = 0):
        self.method = method
        self.ma = analyze_method(method)
        self.program = program
        self.field_depth = field_depth
        self.memo: dict = {}
        self.active: set = set()

    # -- register values
    def use(self, index: int, reg: str) -> list:
        defs = self.ma.reaching_defs(index, reg)
        if not defs:
            return [_hole(f"undefined {reg}")]
        out = []
        for d in defs:
            out.extend(self.def_value(d, reg))
        return _dedupe(out)

    def def_value(self, d: int, reg: str) -> list:
        key = (d, reg)
        if key in self.memo:
            return self.memo[key]
        if key in self.active:
            return [("s", (Hole("loop", key),))]
        self.active.add(key)
        try:
            vals = _dedupe(self._compute(d, reg))
        finally:
            self.active.discard(key)
        markers = _markers(vals)
        if key in markers:
            vals = _dedupe(_collapse_cycle(vals, key))
            markers.discard(key)
        if not markers:
            self.memo[key] = vals
        return vals

    def _compute(self, d: int, reg: str) -> list:
        if d == ENTRY:
            return [_hole(f"param {reg}")]
        ins = self.method.body[d]
        op = ins.opcode
        if reg.startswith("@"):
            return self._object_def(ins, int(reg[1:]))
        if op is Opcode.CONST_STRING:
            return [_str(ins.string)]
        if op is Opcode.CONST:
            return [("i", ins.value)]
        if op in (Opcode.MOVE, Opcode.MOVE_OBJECT):
            return self.use(d, ins.operands[1])
        if op is Opcode.CHECK_CAST:
            return self.use(d, reg)
        if op in (Opcode.MOVE_RESULT, Opcode.MOVE_RESULT_OBJECT):
            return self.use(d, RESULT)
        if op is Opcode.NEW_INSTANCE:
            if ins.type_desc in TRACKED:
                return [("o", d)]
            return [_hole(f"new {ins.type_desc}")]
        if op in (Opcode.IGET, Opcode.SGET):
            return [self._field_value(ins.field)]
        if op.is_invoke and reg == RESULT:
            return self._call(ins)
        return [_hole(f"opaque {ins.mnemonic}")]

    # -- conversions
    def strings(self, index: int, reg: str) -> list:
        """String values of ``reg``, dereferencing tracked objects."""
        out = []
        for v in self.use(index, reg):
            out.extend(self._as_string(index, v))
        return _dedupe(out)

    def _as_string(self, index: int, v: tuple) -> list:
        if v[0] == "s":
            return [v]
        if v[0] == "o":
            return self.use(index, _obj_reg(v[1]))
        if v[1] == 0:
            return [_str("null")]
        return [_hole(f"const {v[1]}")]

    def _converted(self, index: int, reg: str, type_desc: str, sig: str) -> list:
        """Values of an argument as ``append``/``valueOf`` would render them."""
        if type_desc in STRING_LIKE or type_desc == OBJECT or type_desc in BUILDERS:
            return self.strings(index, reg)
        out = []
        for v in self.use(index, reg):
            if v[0] != "i":
                # an unknown primitive keeps its own origin
                is_hole = v[0] == "s" and len(v[1]) == 1 and isinstance(v[1][0], Hole)
                out.append(v if is_hole else _hole(f"call {sig}"))
                continue
            n = v[1]
            if type_desc == "I":
                out.append(_str(str(_int32(n))))
            elif type_desc == "C":
                out.append(_str(chr(n & 0xFFFF)))
            elif type_desc == "Z":
                out.append(_str("true" if n != 0 else "false"))
            else:
                out.append(_hole(f"call {sig}"))
        return _dedupe(out)

    # -- objects
    def _object_def(self, ins: Instruction, site: int) -> list:
        if ins.opcode is Opcode.NEW_INSTANCE:
            return [_str()]
        ref = ins.method
        sig = str(ref)
        receiver_objs = self.ma.points_to(ins.index, ins.receiver) if ins.receiver else frozenset()
        if site not in receiver_objs or ref.cls not in TRACKED:
            return [_hole(f"call {sig}")]
        args = ins.arg_registers
        params = ref.param_types
        if ref.name == "<init>":
            if not params or params == ["I"]:
                return [_str()]
            if len(params) == 1 and (params[0] in STRING_LIKE or params[0] in BUILDERS):
                return self.strings(ins.index, args[0])
            return [_hole(f"call {sig}")]
        if ref.name == "append" and ref.cls in BUILDERS and len(params) == 1:
            old = self.use(ins.index, _obj_reg(site))
            if params[0] in STRING_LIKE + BUILDERS + (OBJECT, "I", "C", "Z"):
                new = self._converted(ins.index, args[0], params[0], sig)
            else:
                new = [_hole(f"call {sig}")]
            return _dedupe(_str(*a[1], *b[1]) for a in old for b in new)
        return [_hole(f"call {sig}")]

    def _field_value(self, fref: FieldRef) -> tuple:
        origin = f"field {fref}"
        if self.program is None or fref.type not in STRING_LIKE or self.field_depth > 3:
            return _hole(origin)
        value = constant_field_value(self.program, fref, self.field_depth + 1)
        return _str(value) if value is not None else _hole(origin)

    # -- calls
    def _call(self, ins: Instruction) -> list:
        ref = ins.method
        sig = str(ref)
        unknown = [_hole(f"call {sig}")]
        args = ins.arg_registers
        params = ref.param_types
        i = ins.index
        if ref.cls in BUILDERS:
            if ref.name == "toString" and not params:
                return self.strings(i, ins.receiver)
            if ref.return_type == ref.cls:
                return self.use(i, ins.receiver)
            return unknown
        if ref.cls != STRING:
            return unknown
        if ins.is_static_invoke:
            if ref.name == "valueOf" and len(params) == 1:
                if params[0] in ("I", "C", "Z"):
                    return self._converted(i, args[0], params[0], sig)
                if params[0] == "[C":
                    return unknown
                return unknown
            if ref.name == "format":
                if params == [STRING, "[Ljava/lang/Object;"]:
                    fmt_reg = args[0]
                elif len(params) == 3 and params[1:] == [STRING, "[Ljava/lang/Object;"]:
                    fmt_reg = args[1]
                else:
                    return unknown
                out = []
                for v in self.strings(i, fmt_reg):
                    parts = v[1]
                    if len(parts) == 1 and isinstance(parts[0], str) or parts == ():
                        t = format_template(parts[0] if parts else "")
                        out.append(("s", t) if t is not None else unknown[0])
                    else:
                        out.append(unknown[0])
                return _dedupe(out)
            return unknown
        recv = self.strings(i, ins.receiver)
        if ref.name == "toString" and not params:
            return recv
        if ref.name == "intern" and not params:
            return recv
        if ref.name == "concat" and params == [STRING]:
            other = self.strings(i, args[0])
            return _dedupe(_str(*a[1], *b[1]) for a in recv for b in other)
        if ref.name in ("toLowerCase", "toUpperCase") and not params:
            fn = ascii_lower if ref.name == "toLowerCase" else ascii_upper
            out = []
            for v in recv:
                if _has_marker(v[1]):
                    out.append(unknown[0])
                else:
                    out.append(_str(*(fn(p) if isinstance(p, str) else p for p in v[1])))
            return _dedupe(out)
        if ref.name == "trim" and not params:
            return _dedupe(_str(java_trim(_const(v))) if _const(v) is not None else unknown[0]
                           for v in recv)
        if ref.name == "replace" and params == [CHAR_SEQUENCE, CHAR_SEQUENCE]:
            targets = self.strings(i, args[0])
            repls = self.strings(i, args[1])
            out = []
            for v in recv:
                for t in targets:
                    for r in repls:
                        s, a, b = _const(v), _const(t), _const(r)
                        if s is None or a is None or b is None:
                            out.append(unknown[0])
                        else:
                            out.append(_str(s.replace(a, b)))
            return _dedupe(out)
        if ref.name == "substring" and params in (["I"], ["I", "I"]):
            bounds = [self.use(i, a) for a in args]
            out = []
            for v in recv:
                s = _const(v)
                for combo in _product(bounds):
                    if s is None or any(b[0] != "i" for b in combo):
                        out.append(unknown[0])
                        continue
                    sub = java_substring(s, *(_int32(b[1]) for b in combo))
                    out.append(_str(sub) if sub is not None else unknown[0])
            return _dedupe(out)
        return unknown


def _const(v: tuple) -> Optional[str]:
    if v[0] != "s":
        return None
    parts = v[1]
    if not parts:
        return ""
    if len(parts) == 1 and isinstance(parts[0], str):
        return parts[0]
    return None


def _product(lists: list) -> list:
    out: list = [()]
    for lst in lists:
        out = [o + (x,) for o in out for x in lst]
    return out


def constant_field_value(program: SmaliProgram, fref: FieldRef, depth: int = 1) -> Optional[str]:
    """Constant value of a String field, if the program pins it to exactly one.

    Sources are the ``.field`` initializer and stores inside the declaring
    class's ``<init>``/``<clinit>``. A store anywhere else makes it unknown.
    """
    cls = program.classes.get(fref.cls)
    if cls is None:
        return None
    fdecl = cls.fields.get(fref.name)
    if fdecl is None or fdecl.type != fref.type:
        return None
    values: set = set()
    if fdecl.has_initializer and isinstance(fdecl.initial_value, str):
        values.add(fdecl.initial_value)
    for owner, method in program.iter_methods():
        for ins in method.body:
            if ins.opcode not in (Opcode.IPUT, Opcode.SPUT) or ins.field != fref:
                continue
            if owner.descriptor != fref.cls or method.name not in ("<init>", "<clinit>"):
                return None
            ev = StringEvaluator(method, program, field_depth=depth)
            for v in ev.strings(ins.index, ins.operands[0]):
                c = _const(v)
                if c is None:
                    return None
                values.add(c)
    if len(values) == 1:
        return values.pop()
    return None


def _to_resolved(v: tuple) -> ResolvedString:
    parts = tuple(Hole(p.origin) if isinstance(p, Hole) else p for p in v[1])
    return ResolvedString(normalize_parts(parts))


def resolve_variants(method: SmaliMethod, index: int, register: str,
                     program: Optional[SmaliProgram] = None) -> list[ResolvedString]:
    """All distinct string values ``register`` may hold just before ``index``."""
    ev = StringEvaluator(method, program)
    vals = [_to_resolved(v) for v in ev.strings(index, register)]
    out = list(dict.fromkeys(vals))
    if len(out) > MAX_VARIANTS:
        return [ResolvedString.unknown("variant-overflow")]
    return out


def merge_variants(variants: list[ResolvedString]) -> ResolvedString:
    if len(variants) == 1:
        return variants[0]
    if not variants:
        return ResolvedString.unknown("no value")
    if any(v.parts == (Hole("variant-overflow"),) for v in variants):
        return ResolvedString.unknown("variant-overflow")
    prefix = os.path.commonprefix([v.literal_prefix for v in variants])
    return ResolvedString(normalize_parts([prefix, Hole("variants")]))


def resolve_string(method: SmaliMethod, slice_: Slice, register: Optional[str] = None,
                   program: Optional[SmaliProgram] = None) -> ResolvedString:
    """Value of the slice's root register; several variants merge to a template."""
    reg = register if register is not None else slice_.register
    return merge_variants(resolve_variants(method, slice_.index, reg, program))


class ResolvedArgument(NamedTuple):
    call_site: CallSite
    position: int
    variants: list


def find_resolved_arguments(program: SmaliProgram, targets) -> list[ResolvedArgument]:
    out = []
    for site in find_call_sites(program, targets):
        for pos, (reg, t) in enumerate(zip(site.arg_registers, site.callee.param_types)):
            if t not in STRING_LIKE:
                continue
            variants = resolve_variants(site.method, site.index, reg, program)
            out.append(ResolvedArgument(site, pos, variants))
    return out


def origin_definitions(method: SmaliMethod, index: int, register: str) -> list:
    """Walk copies and casts back to the defining instructions of a value.

    Returns ``Instruction`` objects, or the string ``"param pN"`` for values
    flowing in from the method entry. Casts are reported alongside their
    source so callers can fall back to the cast type.
    """
    ma = analyze_method(method)
    out: list = []
    seen = set()
    work = [(index, register)]
    while work:
        at, reg = work.pop()
        for d in ma.reaching_defs(at, reg):
            if (d, reg) in seen:
                continue
            seen.add((d, reg))
            if d == ENTRY:
                out.append(f"param {reg}")
                continue
            ins = method.body[d]
            if ins.opcode is Opcode.MOVE_OBJECT or ins.opcode is Opcode.MOVE:
                work.append((d, ins.operands[1]))
            elif ins.opcode is Opcode.CHECK_CAST:
                out.append(ins)
                work.append((d, reg))
            elif ins.opcode in (Opcode.MOVE_RESULT, Opcode.MOVE_RESULT_OBJECT):
                for inv in ma.reaching_defs(d, RESULT):
                    if inv != ENTRY and (inv, RESULT) not in seen:
                        seen.add((inv, RESULT))
                        out.append(method.body[inv])
            else:
                out.append(ins)
    return out
