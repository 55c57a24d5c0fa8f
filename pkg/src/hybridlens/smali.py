"""Parser for apktool-style Smali into a small instruction-level IR.

Only the opcodes the string and bridge analyses reason about are decoded
precisely. Everything else becomes an ``OPAQUE`` instruction with
conservative def/use sets, so slices computed over the IR stay sound.
"""

from __future__ import annotations

import enum
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

logger = logging.getLogger(__name__)

RESULT = "RESULT"
OBJECT = "Ljava/lang/Object;"

_CLASS_DESC_RE = re.compile(r"^L[^;]+;$")
_REG_RE = re.compile(r"^[vp]\d+$")
_ANY_REG_RE = re.compile(r"(?<![\w$/;])([vp]\d+)(?![\w$])")
_RANGE_RE = re.compile(r"^\{\s*([vp])(\d+)\s*\.\.\s*([vp])(\d+)\s*\}$")
_METHOD_REF_RE = re.compile(r"^(\[*L[^;]+;|\[+[ZBSCIJFD])->([^(\s]+)(\([^)]*\)\S+)$")
_FIELD_REF_RE = re.compile(r"^(L[^;]+;)->([^:\s]+):(\S+)$")
_TYPE_RE = re.compile(r"\[*(?:[ZBSCIJFDV]|L[^;]+;)")


class ParseError(Exception):
    """Malformed class or method structure in a Smali file."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.message = message
        self.line = line


class Opcode(enum.Enum):
    CONST_STRING = "const-string"
    CONST = "const"
    MOVE = "move"
    MOVE_OBJECT = "move-object"
    MOVE_RESULT = "move-result"
    MOVE_RESULT_OBJECT = "move-result-object"
    INVOKE_VIRTUAL = "invoke-virtual"
    INVOKE_DIRECT = "invoke-direct"
    INVOKE_STATIC = "invoke-static"
    INVOKE_INTERFACE = "invoke-interface"
    INVOKE_SUPER = "invoke-super"
    NEW_INSTANCE = "new-instance"
    CHECK_CAST = "check-cast"
    IGET = "iget"
    IPUT = "iput"
    SGET = "sget"
    SPUT = "sput"
    RETURN = "return"
    RETURN_OBJECT = "return-object"
    RETURN_VOID = "return-void"
    GOTO = "goto"
    IF = "if"
    IFZ = "ifz"
    SWITCH = "switch"
    NOP = "nop"
    OPAQUE = "opaque"

    @property
    def is_invoke(self) -> bool:
        return self.value.startswith("invoke-")

    @property
    def is_return(self) -> bool:
        return self in (Opcode.RETURN, Opcode.RETURN_OBJECT, Opcode.RETURN_VOID)


_MNEMONICS = {
    "const-string": Opcode.CONST_STRING,
    "const-string/jumbo": Opcode.CONST_STRING,
    "const/4": Opcode.CONST,
    "const/16": Opcode.CONST,
    "const": Opcode.CONST,
    "const/high16": Opcode.CONST,
    "move": Opcode.MOVE,
    "move/from16": Opcode.MOVE,
    "move/16": Opcode.MOVE,
    "move-object": Opcode.MOVE_OBJECT,
    "move-object/from16": Opcode.MOVE_OBJECT,
    "move-object/16": Opcode.MOVE_OBJECT,
    "move-result": Opcode.MOVE_RESULT,
    "move-result-object": Opcode.MOVE_RESULT_OBJECT,
    "new-instance": Opcode.NEW_INSTANCE,
    "check-cast": Opcode.CHECK_CAST,
    "return": Opcode.RETURN,
    "return-object": Opcode.RETURN_OBJECT,
    "return-void": Opcode.RETURN_VOID,
    "goto": Opcode.GOTO,
    "goto/16": Opcode.GOTO,
    "goto/32": Opcode.GOTO,
    "nop": Opcode.NOP,
    "packed-switch": Opcode.SWITCH,
    "sparse-switch": Opcode.SWITCH,
}
for _kind in ("virtual", "direct", "static", "interface", "super"):
    _MNEMONICS[f"invoke-{_kind}"] = Opcode(f"invoke-{_kind}")
    _MNEMONICS[f"invoke-{_kind}/range"] = Opcode(f"invoke-{_kind}")
for _suffix in ("", "-object", "-boolean", "-byte", "-char", "-short"):
    for _op in ("iget", "iput", "sget", "sput"):
        _MNEMONICS[_op + _suffix] = Opcode(_op)
for _cmp in ("eq", "ne", "lt", "ge", "gt", "le"):
    _MNEMONICS[f"if-{_cmp}"] = Opcode.IF
    _MNEMONICS[f"if-{_cmp}z"] = Opcode.IFZ

# Opaque mnemonics whose first register operand is read, not written.
_NON_WRITING_PREFIXES = (
    "if-", "return", "throw", "monitor-", "aput", "iput", "sput",
    "fill-array-data", "packed-switch", "sparse-switch", "invoke",
    "filled-new-array", "goto", "nop",
)

FRAMEWORK_SUPERS = {
    "Landroid/webkit/WebView;": "Landroid/widget/AbsoluteLayout;",
    "Landroid/widget/AbsoluteLayout;": "Landroid/view/ViewGroup;",
    "Landroid/view/ViewGroup;": "Landroid/view/View;",
    "Landroid/view/View;": OBJECT,
    "Landroid/webkit/WebViewClient;": OBJECT,
    "Landroid/webkit/WebChromeClient;": OBJECT,
    "Landroid/webkit/WebSettings;": OBJECT,
}

JAVASCRIPT_INTERFACE = "Landroid/webkit/JavascriptInterface;"


def parse_type_list(text: str) -> list[str]:
    """Split a concatenated descriptor list such as ``ILjava/lang/String;[B``."""
    types = []
    pos = 0
    while pos < len(text):
        m = _TYPE_RE.match(text, pos)
        if not m:
            raise ValueError(f"bad type descriptor list {text!r}")
        types.append(m.group(0))
        pos = m.end()
    return types


def is_wide(type_desc: str) -> bool:
    return type_desc in ("J", "D")


@dataclass(frozen=True)
class MethodRef:
    cls: str
    name: str
    signature: str  # "(params)ret"

    @property
    def param_types(self) -> list[str]:
        return parse_type_list(self.signature[1:self.signature.index(")")])

    @property
    def return_type(self) -> str:
        return self.signature[self.signature.index(")") + 1:]

    @property
    def arity(self) -> int:
        return len(self.param_types)

    def __str__(self) -> str:
        return f"{self.cls}->{self.name}{self.signature}"


@dataclass(frozen=True)
class FieldRef:
    cls: str
    name: str
    type: str

    def __str__(self) -> str:
        return f"{self.cls}->{self.name}:{self.type}"


@dataclass(frozen=True)
class Instruction:
    index: int
    opcode: Opcode
    mnemonic: str
    defs: frozenset
    uses: frozenset
    operands: tuple = ()  # registers in syntactic order
    string: Optional[str] = None
    value: Optional[int] = None
    method: Optional[MethodRef] = None
    field: Optional[FieldRef] = None
    type_desc: Optional[str] = None
    target: Optional[str] = None
    line: int = 0
    text: str = ""

    @property
    def payload(self):
        if self.opcode is Opcode.CONST_STRING:
            return self.string
        if self.opcode is Opcode.CONST:
            return self.value
        if self.method is not None:
            return (self.method, self.operands)
        if self.field is not None:
            return self.field
        if self.target is not None:
            return self.target
        return self.type_desc

    @property
    def is_static_invoke(self) -> bool:
        return self.opcode is Opcode.INVOKE_STATIC

    @property
    def receiver(self) -> Optional[str]:
        if self.opcode.is_invoke and not self.is_static_invoke and self.operands:
            return self.operands[0]
        return None

    @property
    def arg_registers(self) -> tuple:
        """First register of each declared argument (receiver excluded)."""
        if not self.opcode.is_invoke or self.method is None:
            return ()
        regs = list(self.operands)
        pos = 0 if self.is_static_invoke else 1
        out = []
        for t in self.method.param_types:
            if pos >= len(regs):
                break
            out.append(regs[pos])
            pos += 2 if is_wide(t) else 1
        return tuple(out)


@dataclass
class SmaliField:
    name: str
    type: str
    is_static: bool
    initial_value: object = None  # str, int, bool or None
    has_initializer: bool = False


@dataclass
class SmaliMethod:
    name: str
    signature: str
    is_static: bool
    registers: int
    params: list = field(default_factory=list)  # [(register, type)]
    annotations: list = field(default_factory=list)
    body: list = field(default_factory=list)
    labels: dict = field(default_factory=dict)
    catches: list = field(default_factory=list)  # [(start, end, handler)]
    switch_tables: dict = field(default_factory=dict)  # data label -> [labels]
    flags: list = field(default_factory=list)
    owner: str = ""

    @property
    def ref(self) -> MethodRef:
        return MethodRef(self.owner, self.name, self.signature)

    @property
    def return_type(self) -> str:
        return self.signature[self.signature.index(")") + 1:]

    @property
    def is_bridge_annotated(self) -> bool:
        return JAVASCRIPT_INTERFACE in self.annotations

    def param_type(self, register: str) -> Optional[str]:
        for reg, t in self.params:
            if reg == register:
                return t
        return None


@dataclass
class SmaliClass:
    descriptor: str
    super_descriptor: Optional[str]
    interfaces: list = field(default_factory=list)
    methods: list = field(default_factory=list)
    class_annotations: list = field(default_factory=list)
    fields: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    source: Optional[str] = None
    diagnostics: list = field(default_factory=list)

    def method(self, name: str, signature: Optional[str] = None) -> Optional[SmaliMethod]:
        for m in self.methods:
            if m.name == name and (signature is None or m.signature == signature):
                return m
        return None


@dataclass
class SmaliProgram:
    app_id: str
    classes: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    def superclass_chain(self, descriptor: str) -> Iterator[str]:
        """Yield ``descriptor`` and its ancestors known to the app or framework table."""
        seen = set()
        current: Optional[str] = descriptor
        while current and current not in seen:
            seen.add(current)
            yield current
            cls = self.classes.get(current)
            if cls is not None:
                current = cls.super_descriptor
            else:
                current = FRAMEWORK_SUPERS.get(current)

    def is_subclass(self, descriptor: str, ancestor: str) -> bool:
        return ancestor in self.superclass_chain(descriptor)

    def iter_methods(self) -> Iterator[tuple]:
        for desc in sorted(self.classes):
            for m in self.classes[desc].methods:
                yield self.classes[desc], m


# ---------------------------------------------------------------------------
# lexical helpers

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "b": "\b", "f": "\f",
            "'": "'", '"': '"', "\\": "\\", "0": "\0"}


def unescape_smali(body: str) -> str:
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c != "\\":
            out.append(c)
            i += 1
            continue
        if i + 1 >= len(body):
            raise ValueError("dangling backslash")
        n = body[i + 1]
        if n == "u":
            digits = body[i + 2:i + 6]
            if not re.fullmatch(r"[0-9a-fA-F]{4}", digits):
                raise ValueError(f"bad unicode escape \\u{digits}")
            out.append(chr(int(digits, 16)))
            i += 6
        elif n in _ESCAPES:
            out.append(_ESCAPES[n])
            i += 2
        else:
            raise ValueError(f"unknown escape \\{n}")
    # escapes are UTF-16 code units; fuse surrogate pairs into code points
    return "".join(out).encode("utf-16-le", "surrogatepass").decode("utf-16-le", "surrogatepass")


def escape_smali(text: str) -> str:
    out = []
    for c in text:
        if c == "\\":
            out.append("\\\\")
        elif c == '"':
            out.append('\\"')
        elif c == "\n":
            out.append("\\n")
        elif c == "\t":
            out.append("\\t")
        elif c == "\r":
            out.append("\\r")
        elif ord(c) > 0xFFFF:
            hi, lo = divmod(ord(c) - 0x10000, 0x400)
            out.append(f"\\u{0xD800 + hi:04x}\\u{0xDC00 + lo:04x}")
        elif ord(c) < 0x20 or ord(c) > 0x7E:
            out.append(f"\\u{ord(c):04x}")
        else:
            out.append(c)
    return "".join(out)


def _strip_comment(line: str) -> str:
    quote = None
    i = 0
    while i < len(line):
        c = line[i]
        if quote:
            if c == "\\":
                i += 2
                continue
            if c == quote:
                quote = None
        elif c in "\"'":
            quote = c
        elif c == "#":
            return line[:i]
        i += 1
    return line


def _split_operands(text: str) -> list[str]:
    """Split on commas outside braces and string literals."""
    parts, buf, depth, quote = [], [], 0, None
    i = 0
    while i < len(text):
        c = text[i]
        if quote:
            buf.append(c)
            if c == "\\" and i + 1 < len(text):
                buf.append(text[i + 1])
                i += 2
                continue
            if c == quote:
                quote = None
        elif c == '"':
            quote = c
            buf.append(c)
        elif c == "{":
            depth += 1
            buf.append(c)
        elif c == "}":
            depth -= 1
            buf.append(c)
        elif c == "," and depth == 0:
            parts.append("".join(buf).strip())
            buf = []
        else:
            buf.append(c)
        i += 1
    tail = "".join(buf).strip()
    if tail or parts:
        parts.append(tail)
    return parts


def _parse_int(text: str) -> int:
    t = text.strip().lower()
    # smali width suffixes: L (long), S (short), T (byte)
    if t and t[-1] in "lst":
        t = t[:-1]
    return int(t, 0)


def _parse_literal(text: str):
    t = text.strip()
    if t.startswith('"') and t.endswith('"') and len(t) >= 2:
        return unescape_smali(t[1:-1])
    if t == "true":
        return True
    if t == "false":
        return False
    if t == "null":
        return None
    try:
        return _parse_int(t)
    except ValueError:
        return t


# ---------------------------------------------------------------------------
# instruction decoding

class _RegisterMap:
    """Canonicalises ``vN`` registers that alias parameter slots to ``pK``."""

    def __init__(self, locals_count: Optional[int]):
        self.locals_count = locals_count

    def __call__(self, reg: str) -> str:
        if self.locals_count is not None and reg[0] == "v":
            n = int(reg[1:])
            if n >= self.locals_count:
                return f"p{n - self.locals_count}"
        return reg


def _expand_registers(text: str, canon, line_no: int) -> list[str]:
    text = text.strip()
    m = _RANGE_RE.match(text)
    if m:
        k1, n1, k2, n2 = m.group(1), int(m.group(2)), m.group(3), int(m.group(4))
        if k1 != k2 or n2 < n1:
            raise ParseError(f"bad register range {text}", line_no)
        return [canon(f"{k1}{n}") for n in range(n1, n2 + 1)]
    if not (text.startswith("{") and text.endswith("}")):
        raise ParseError(f"expected register list, got {text!r}", line_no)
    inner = text[1:-1].strip()
    if not inner:
        return []
    regs = [r.strip() for r in inner.split(",")]
    for r in regs:
        if not _REG_RE.match(r):
            raise ParseError(f"bad register {r!r}", line_no)
    return [canon(r) for r in regs]


def _reg(text: str, canon, line_no: int) -> str:
    t = text.strip()
    if not _REG_RE.match(t):
        raise ParseError(f"expected register, got {t!r}", line_no)
    return canon(t)


def _wide_pair(reg: str) -> list[str]:
    return [reg, f"{reg[0]}{int(reg[1:]) + 1}"]


def decode_instruction(index: int, mnemonic: str, rest: str, canon, line_no: int,
                       raw: str = "") -> Instruction:
    ops = _split_operands(rest) if rest else []
    opcode = _MNEMONICS.get(mnemonic, Opcode.OPAQUE)
    common = dict(index=index, mnemonic=mnemonic, line=line_no, text=raw.strip())

    def need(n):
        if len(ops) != n:
            raise ParseError(f"{mnemonic} expects {n} operands, got {len(ops)}", line_no)

    if opcode is Opcode.CONST_STRING:
        need(2)
        r = _reg(ops[0], canon, line_no)
        lit = ops[1].strip()
        if not (lit.startswith('"') and lit.endswith('"') and len(lit) >= 2):
            raise ParseError("const-string needs a string literal", line_no)
        try:
            s = unescape_smali(lit[1:-1])
        except ValueError as exc:
            raise ParseError(str(exc), line_no) from None
        return Instruction(opcode=opcode, defs=frozenset([r]), uses=frozenset(),
                           operands=(r,), string=s, **common)
    if opcode is Opcode.CONST:
        need(2)
        r = _reg(ops[0], canon, line_no)
        try:
            v = _parse_int(ops[1])
        except ValueError:
            raise ParseError(f"bad integer literal {ops[1]!r}", line_no) from None
        return Instruction(opcode=opcode, defs=frozenset([r]), uses=frozenset(),
                           operands=(r,), value=v, **common)
    if opcode in (Opcode.MOVE, Opcode.MOVE_OBJECT):
        need(2)
        d, s = _reg(ops[0], canon, line_no), _reg(ops[1], canon, line_no)
        return Instruction(opcode=opcode, defs=frozenset([d]), uses=frozenset([s]),
                           operands=(d, s), **common)
    if opcode in (Opcode.MOVE_RESULT, Opcode.MOVE_RESULT_OBJECT):
        need(1)
        d = _reg(ops[0], canon, line_no)
        return Instruction(opcode=opcode, defs=frozenset([d]), uses=frozenset([RESULT]),
                           operands=(d,), **common)
    if opcode.is_invoke:
        need(2)
        regs = _expand_registers(ops[0], canon, line_no)
        m = _METHOD_REF_RE.match(ops[1].strip())
        if not m:
            raise ParseError(f"bad method reference {ops[1]!r}", line_no)
        ref = MethodRef(m.group(1), m.group(2), m.group(3))
        defs = frozenset([RESULT]) if ref.return_type != "V" else frozenset()
        return Instruction(opcode=opcode, defs=defs, uses=frozenset(regs),
                           operands=tuple(regs), method=ref, **common)
    if opcode in (Opcode.NEW_INSTANCE, Opcode.CHECK_CAST):
        need(2)
        r = _reg(ops[0], canon, line_no)
        uses = frozenset([r]) if opcode is Opcode.CHECK_CAST else frozenset()
        return Instruction(opcode=opcode, defs=frozenset([r]), uses=uses,
                           operands=(r,), type_desc=ops[1].strip(), **common)
    if opcode in (Opcode.IGET, Opcode.IPUT, Opcode.SGET, Opcode.SPUT):
        instance = opcode in (Opcode.IGET, Opcode.IPUT)
        need(3 if instance else 2)
        m = _FIELD_REF_RE.match(ops[-1].strip())
        if not m:
            raise ParseError(f"bad field reference {ops[-1]!r}", line_no)
        fref = FieldRef(m.group(1), m.group(2), m.group(3))
        regs = [_reg(o, canon, line_no) for o in ops[:-1]]
        if opcode in (Opcode.IGET, Opcode.SGET):
            defs, uses = frozenset(regs[:1]), frozenset(regs[1:])
        else:
            defs, uses = frozenset(), frozenset(regs)
        return Instruction(opcode=opcode, defs=defs, uses=uses, operands=tuple(regs),
                           field=fref, **common)
    if opcode is Opcode.RETURN_VOID:
        need(0)
        return Instruction(opcode=opcode, defs=frozenset(), uses=frozenset(), **common)
    if opcode in (Opcode.RETURN, Opcode.RETURN_OBJECT):
        need(1)
        r = _reg(ops[0], canon, line_no)
        return Instruction(opcode=opcode, defs=frozenset(), uses=frozenset([r]),
                           operands=(r,), **common)
    if opcode is Opcode.GOTO:
        need(1)
        return Instruction(opcode=opcode, defs=frozenset(), uses=frozenset(),
                           target=_label(ops[0], line_no), **common)
    if opcode in (Opcode.IF, Opcode.IFZ):
        need(3 if opcode is Opcode.IF else 2)
        regs = [_reg(o, canon, line_no) for o in ops[:-1]]
        return Instruction(opcode=opcode, defs=frozenset(), uses=frozenset(regs),
                           operands=tuple(regs), target=_label(ops[-1], line_no), **common)
    if opcode is Opcode.SWITCH:
        need(2)
        r = _reg(ops[0], canon, line_no)
        return Instruction(opcode=opcode, defs=frozenset(), uses=frozenset([r]),
                           operands=(r,), target=_label(ops[1], line_no), **common)
    if opcode is Opcode.NOP:
        need(0)
        return Instruction(opcode=opcode, defs=frozenset(), uses=frozenset(), **common)
    return _decode_opaque(mnemonic, rest, canon, common)


def _label(text: str, line_no: int) -> str:
    t = text.strip()
    if not t.startswith(":") or len(t) < 2:
        raise ParseError(f"expected label, got {t!r}", line_no)
    return t[1:]


def _decode_opaque(mnemonic: str, rest: str, canon, common) -> Instruction:
    regs: list[str] = []
    range_m = re.search(r"\{\s*([vp])(\d+)\s*\.\.\s*([vp])(\d+)\s*\}", rest or "")
    if range_m:
        regs = [canon(f"{range_m.group(1)}{n}")
                for n in range(int(range_m.group(2)), int(range_m.group(4)) + 1)]
    # strip string literals before scanning for register names
    scrubbed = re.sub(r'"(?:\\.|[^"\\])*"', '""', rest or "")
    scrubbed = re.sub(r"L[^;\s]+;", "", scrubbed)
    if not range_m:
        regs = [canon(r) for r in _ANY_REG_RE.findall(scrubbed.split(":")[0] if ":" in scrubbed else scrubbed)]
    defs: set = set()
    if mnemonic.startswith("filled-new-array"):
        defs.add(RESULT)
    elif regs and not mnemonic.startswith(_NON_WRITING_PREFIXES):
        defs.add(regs[0])
        if "-wide" in mnemonic and not mnemonic.startswith(("aget", "iget", "sget")) or \
                mnemonic.startswith(("aget-wide", "iget-wide", "sget-wide")):
            defs.update(_wide_pair(regs[0]))
    return Instruction(opcode=Opcode.OPAQUE, defs=frozenset(defs), uses=frozenset(regs),
                       operands=tuple(regs), **common)


# ---------------------------------------------------------------------------
# class parsing

_KNOWN_METHOD_DIRECTIVES = {
    ".line", ".local", ".end local", ".restart local", ".prologue", ".epilogue",
    ".source",
}


def _method_header(line: str, line_no: int):
    parts = line.split()
    if len(parts) < 2:
        raise ParseError("malformed .method directive", line_no)
    decl = parts[-1]
    flags = parts[1:-1]
    m = re.match(r"^([^(\s]+)(\([^)]*\)\S+)$", decl)
    if not m:
        raise ParseError(f"malformed method declaration {decl!r}", line_no)
    name, sig = m.group(1), m.group(2)
    try:
        ref = MethodRef("", name, sig)
        ref.param_types  # validate
    except ValueError as exc:
        raise ParseError(str(exc), line_no) from None
    return name, sig, flags


def _param_registers(owner: str, sig: str, is_static: bool) -> list:
    params = []
    n = 0
    if not is_static:
        params.append(("p0", owner))
        n = 1
    for t in MethodRef(owner, "", sig).param_types:
        params.append((f"p{n}", t))
        n += 2 if is_wide(t) else 1
    return params


def _param_register_count(params: list) -> int:
    return sum(2 if is_wide(t) else 1 for _, t in params)


class _MethodBuilder:
    def __init__(self, owner: str, name: str, sig: str, flags: list, line_no: int):
        self.owner = owner
        self.name = name
        self.sig = sig
        self.flags = flags
        self.line_no = line_no
        self.is_static = "static" in flags
        self.params = _param_registers(owner, sig, self.is_static)
        self.registers: Optional[int] = None
        self.annotations: list[str] = []
        self.raw: list[tuple] = []  # (kind, payload, line_no, raw)
        self.catches: list[tuple] = []
        self.switch_tables: dict = {}

    def build(self) -> SmaliMethod:
        pcount = _param_register_count(self.params)
        locals_count = None if self.registers is None else self.registers - pcount
        canon = _RegisterMap(locals_count)
        body: list[Instruction] = []
        labels: dict = {}
        for kind, payload, line_no, raw in self.raw:
            if kind == "label":
                labels[payload] = len(body)
            else:
                mnemonic, rest = payload
                body.append(decode_instruction(len(body), mnemonic, rest, canon, line_no, raw))
        method = SmaliMethod(
            name=self.name, signature=self.sig, is_static=self.is_static,
            registers=self.registers if self.registers is not None else pcount,
            params=self.params, annotations=self.annotations, body=body,
            labels=labels, catches=self.catches, switch_tables=self.switch_tables,
            flags=self.flags, owner=self.owner,
        )
        for ins in body:
            if ins.opcode in (Opcode.GOTO, Opcode.IF, Opcode.IFZ) and ins.target not in labels:
                raise ParseError(f"undefined label :{ins.target}", ins.line)
            if ins.opcode is Opcode.SWITCH and ins.target not in self.switch_tables:
                raise ParseError(f"undefined switch data :{ins.target}", ins.line)
        for targets in self.switch_tables.values():
            for t in targets:
                if t not in labels:
                    raise ParseError(f"undefined switch target :{t}", self.line_no)
        for start, end, handler in self.catches:
            for lab in (start, end, handler):
                if lab not in labels:
                    raise ParseError(f"undefined catch label :{lab}", self.line_no)
        return method


def _param_has_block(lines: list, line_no: int) -> bool:
    """True if the ``.param`` on ``line_no`` owns annotations closed by ``.end param``.

    A one-line ``.param`` may be directly followed by method annotations, so
    only a matching ``.end param`` after the annotations makes it a block.
    """
    depth = 0
    for raw in lines[line_no:]:
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith(".annotation"):
            depth += 1
        elif line == ".end annotation":
            depth -= 1
        elif depth == 0:
            return line in (".end param", ".end parameter")
    return False


def parse_smali_class(text: str) -> SmaliClass:
    """Parse the Smali source of a single class."""
    descriptor = None
    super_desc = None
    interfaces: list[str] = []
    class_annotations: list[str] = []
    flags: list[str] = []
    fields: dict = {}
    methods: list[SmaliMethod] = []
    diagnostics: list[str] = []
    source = None

    method: Optional[_MethodBuilder] = None
    # block stack entries: "annotation", "subannotation", "param", "field",
    # "array-data", ("packed-switch", label), ("sparse-switch", label)
    blocks: list = []
    last_label: Optional[str] = None
    current_field: Optional[SmaliField] = None

    lines = text.splitlines()
    for line_no, raw_line in enumerate(lines, start=1):
        line = _strip_comment(raw_line).strip()
        if not line:
            continue

        top = blocks[-1] if blocks else None
        # data blocks inside methods
        if isinstance(top, tuple) and top[0] in ("packed-switch", "sparse-switch"):
            if line in (".end packed-switch", ".end sparse-switch"):
                blocks.pop()
                continue
            if top[0] == "packed-switch":
                if line.startswith(":"):
                    method.switch_tables[top[1]].append(line[1:])
            else:
                if "->" in line:
                    method.switch_tables[top[1]].append(line.split("->")[1].strip()[1:])
            continue
        if top == "array-data":
            if line == ".end array-data":
                blocks.pop()
            continue
        if top in ("annotation", "subannotation"):
            if line == ".end annotation":
                if top != "annotation":
                    raise ParseError(".end annotation closes .subannotation", line_no)
                blocks.pop()
            elif line.startswith(".subannotation") or line.endswith(".subannotation") or \
                    re.search(r"=\s*\.subannotation\b", line):
                blocks.append("subannotation")
            elif line == ".end subannotation":
                if top != "subannotation":
                    raise ParseError("unbalanced .end subannotation", line_no)
                blocks.pop()
            continue

        if line.startswith(".class"):
            if descriptor is not None:
                raise ParseError("duplicate .class directive", line_no)
            parts = line.split()
            if len(parts) < 2 or not _CLASS_DESC_RE.match(parts[-1]):
                raise ParseError("malformed .class directive", line_no)
            descriptor = parts[-1]
            flags = parts[1:-1]
            continue
        if descriptor is None:
            if line.startswith("."):
                raise ParseError(f"{line.split()[0]} before .class", line_no)
            raise ParseError("content before .class", line_no)

        if line.startswith(".super"):
            parts = line.split()
            if len(parts) != 2 or not _CLASS_DESC_RE.match(parts[1]):
                raise ParseError("malformed .super directive", line_no)
            super_desc = parts[1]
            continue
        if line.startswith(".implements"):
            parts = line.split()
            if len(parts) != 2 or not _CLASS_DESC_RE.match(parts[1]):
                raise ParseError("malformed .implements directive", line_no)
            interfaces.append(parts[1])
            continue
        if line.startswith(".source"):
            source = _parse_literal(line[len(".source"):])
            continue
        if line.startswith(".annotation"):
            parts = line.split()
            if len(parts) < 3:
                raise ParseError("malformed .annotation directive", line_no)
            ann = parts[-1]
            if blocks and blocks[-1] == "param":
                pass
            elif blocks and blocks[-1] == "field":
                pass
            elif method is not None:
                method.annotations.append(ann)
            else:
                class_annotations.append(ann)
            blocks.append("annotation")
            continue
        if line in (".end param", ".end parameter"):
            if blocks and blocks[-1] == "param":
                blocks.pop()
            continue
        if line.startswith(".param") or line.startswith(".parameter"):
            if method is None:
                raise ParseError(".param outside method", line_no)
            if _param_has_block(lines, line_no):
                blocks.append("param")
            continue
        if line.startswith(".field"):
            if method is not None:
                raise ParseError(".field inside method", line_no)
            current_field = _parse_field(line, line_no)
            fields[current_field.name] = current_field
            blocks.append("field")
            continue
        if line == ".end field":
            if blocks and blocks[-1] == "field":
                blocks.pop()
            continue
        if blocks and blocks[-1] == "field" and method is None and not line.startswith(".method"):
            diagnostics.append(f"line {line_no}: unexpected {line.split()[0]!r} in field")
            continue
        if blocks and blocks[-1] == "field":
            blocks.pop()

        if line.startswith(".method"):
            if method is not None:
                raise ParseError("nested .method (missing .end method)", line_no)
            name, sig, mflags = _method_header(line, line_no)
            method = _MethodBuilder(descriptor, name, sig, mflags, line_no)
            last_label = None
            continue
        if line == ".end method":
            if method is None:
                raise ParseError(".end method without .method", line_no)
            if blocks:
                raise ParseError("unterminated block before .end method", line_no)
            methods.append(method.build())
            method = None
            continue

        if method is None:
            if line.startswith("."):
                diagnostics.append(f"line {line_no}: unknown directive {line.split()[0]}")
                continue
            raise ParseError(f"instruction outside method: {line.split()[0]}", line_no)

        # inside a method
        if line.startswith(":"):
            label = line[1:].strip()
            if not label:
                raise ParseError("empty label", line_no)
            method.raw.append(("label", label, line_no, line))
            last_label = label
            continue
        if line.startswith(".registers") or line.startswith(".locals"):
            parts = line.split()
            try:
                n = int(parts[1], 0)
            except (IndexError, ValueError):
                raise ParseError(f"malformed {parts[0]}", line_no) from None
            if parts[0] == ".locals":
                n += _param_register_count(method.params)
            method.registers = n
            continue
        if line.startswith(".catch"):
            m = re.match(r"^\.catch(?:all)?\s+(?:\S+\s+)?\{\s*:(\S+)\s*\.\.\s*:(\S+)\s*\}\s*:(\S+)$", line)
            if not m:
                raise ParseError("malformed .catch directive", line_no)
            method.catches.append((m.group(1), m.group(2), m.group(3)))
            continue
        if line.startswith(".packed-switch"):
            if last_label is None:
                raise ParseError(".packed-switch without label", line_no)
            method.switch_tables[last_label] = []
            blocks.append(("packed-switch", last_label))
            continue
        if line.startswith(".sparse-switch"):
            if last_label is None:
                raise ParseError(".sparse-switch without label", line_no)
            method.switch_tables[last_label] = []
            blocks.append(("sparse-switch", last_label))
            continue
        if line.startswith(".array-data"):
            blocks.append("array-data")
            continue
        if line.startswith("."):
            word = line.split()[0]
            if word not in _KNOWN_METHOD_DIRECTIVES and not line.startswith(".end local"):
                diagnostics.append(f"line {line_no}: unknown directive {word}")
            continue

        parts = line.split(None, 1)
        mnemonic = parts[0]
        rest = parts[1] if len(parts) > 1 else ""
        method.raw.append(("ins", (mnemonic, rest), line_no, raw_line))
        last_label = None

    if descriptor is None:
        raise ParseError("missing .class directive", max(len(lines), 1))
    if method is not None:
        raise ParseError(f"unterminated method {method.name}", method.line_no)
    if any(b in ("annotation", "subannotation") for b in blocks):
        raise ParseError("unterminated .annotation block", len(lines))
    if super_desc is None and descriptor != OBJECT:
        raise ParseError("missing .super directive", 1)
    return SmaliClass(
        descriptor=descriptor, super_descriptor=super_desc, interfaces=interfaces,
        methods=methods, class_annotations=class_annotations, fields=fields,
        flags=flags, source=source, diagnostics=diagnostics,
    )


def _parse_field(line: str, line_no: int) -> SmaliField:
    decl, _, init = line.partition(" = ")
    parts = decl.split()
    if len(parts) < 2 or ":" not in parts[-1]:
        raise ParseError("malformed .field directive", line_no)
    name, _, type_desc = parts[-1].partition(":")
    fld = SmaliField(name=name, type=type_desc, is_static="static" in parts[1:-1])
    if init:
        try:
            fld.initial_value = _parse_literal(init)
        except ValueError as exc:
            raise ParseError(str(exc), line_no) from None
        fld.has_initializer = True
    return fld


def load_program(root, app_id: Optional[str] = None) -> SmaliProgram:
    """Load every ``.smali`` file below ``root``.

    Per-file failures become diagnostics; a missing root raises
    ``FileNotFoundError``.
    """
    root = Path(root)
    if not root.is_dir():
        if not root.exists():
            raise FileNotFoundError(f"no such app directory: {root}")
        raise NotADirectoryError(f"not a directory: {root}")
    program = SmaliProgram(app_id=app_id if app_id is not None else root.name)
    files = sorted(
        (Path(dirpath) / f for dirpath, _, names in os.walk(root) for f in names
         if f.endswith(".smali")),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    for path in files:
        rel = path.relative_to(root).as_posix()
        try:
            text = path.read_bytes().decode("utf-8")
        except UnicodeDecodeError as exc:
            program.diagnostics.append(f"{rel}: not valid UTF-8 ({exc.reason} at byte {exc.start})")
            continue
        except OSError as exc:
            program.diagnostics.append(f"{rel}: unreadable ({exc.strerror})")
            continue
        try:
            cls = parse_smali_class(text)
        except ParseError as exc:
            program.diagnostics.append(f"{rel}:{exc.line}: {exc.message}")
            continue
        for d in cls.diagnostics:
            program.diagnostics.append(f"{rel}: {d}")
        if cls.descriptor in program.classes:
            program.diagnostics.append(f"{rel}: duplicate class {cls.descriptor} ignored")
            continue
        program.classes[cls.descriptor] = cls
    logger.debug("loaded %d classes for %s", len(program.classes), program.app_id)
    return program
