"""Bridge-object analysis around ``addJavascriptInterface`` call sites."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .dataflow import (
    ADD_JS_INTERFACE, SET_JS_ENABLED, WEBVIEW, CallSite, ResolvedString,
    StringEvaluator, backward_slice, find_call_sites, merge_variants,
    origin_definitions, resolve_variants,
)
from .smali import Instruction, MethodRef, Opcode, SmaliClass, SmaliMethod, SmaliProgram

logger = logging.getLogger(__name__)

UNKNOWN_CLASS = "UNKNOWN"
WEBVIEW_CLIENT = "Landroid/webkit/WebViewClient;"
WEBCHROME_CLIENT = "Landroid/webkit/WebChromeClient;"

SOURCE_CATEGORIES = {
    "Cookies", "File system", "Account Information", "Network Information",
    "Location", "Activity Information", "Application level navigation affordances",
    "Locale", "Date and Time", "Internal Memory Information", "Device ID", "Other",
}


class ConfigError(ValueError):
    """A configuration file could not be parsed."""


class JsEnabled(str, enum.Enum):
    YES = "YES"
    NO_EVIDENCE = "NO_EVIDENCE"
    UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class SourceEntry:
    cls: str
    method: str
    category: str

    def matches(self, ref: MethodRef) -> bool:
        return ref.cls == self.cls and ref.name == self.method

    def __str__(self) -> str:
        return f"{self.cls}->{self.method}"


@dataclass(frozen=True)
class SensitiveSourceDB:
    entries: tuple

    @classmethod
    def parse(cls, text: str, where: str = "<sources>") -> "SensitiveSourceDB":
        entries = []
        for n, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 2)
            if len(parts) != 3 or not parts[0].startswith("L") or not parts[0].endswith(";"):
                raise ConfigError(f"{where}:{n}: expected 'class_descriptor method category'")
            if parts[2] not in SOURCE_CATEGORIES:
                raise ConfigError(f"{where}:{n}: unknown category {parts[2]!r}")
            entries.append(SourceEntry(parts[0], parts[1], parts[2]))
        return cls(tuple(entries))

    @classmethod
    def load(cls, path) -> "SensitiveSourceDB":
        path = Path(path)
        return cls.parse(path.read_text(encoding="utf-8"), str(path))

    @classmethod
    def default(cls) -> "SensitiveSourceDB":
        text = resources.files("hybridlens").joinpath("data/sensitive_sources.txt").read_text("utf-8")
        return cls.parse(text, "sensitive_sources.txt")

    def lookup(self, ref: MethodRef) -> Optional[SourceEntry]:
        for e in self.entries:
            if e.matches(ref):
                return e
        return None


@dataclass
class SensitiveFlow:
    method: str  # owner->name+signature of the bridged method
    source: str
    category: str
    bridge_site: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"bridge": self.bridge_site, "method": self.method,
                "source": self.source, "category": self.category}


@dataclass
class BridgedMethod:
    owner: str
    name: str
    signature: str
    returns_sensitive: bool
    sources_hit: list = field(default_factory=list)
    sensitive_sources: list = field(default_factory=list)  # (entry) reaching a return

    @property
    def ref(self) -> str:
        return f"{self.owner}->{self.name}{self.signature}"

    def to_dict(self) -> dict:
        return {
            "owner": self.owner, "name": self.name, "signature": self.signature,
            "returns_sensitive": self.returns_sensitive,
            "sources_hit": [str(e) for e in self.sources_hit],
        }


@dataclass
class BridgeInjection:
    call_site: CallSite
    exposed_name: ResolvedString
    bridged_class: str
    class_candidates: list
    webview_origin: str
    js_enabled: JsEnabled
    enclosing_component: str
    in_webviewclient_callback: bool
    methods: list = field(default_factory=list)
    flows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "call_site": self.call_site.to_dict(),
            "exposed_name": self.exposed_name.to_dict(),
            "bridged_class": self.bridged_class,
            "class_candidates": list(self.class_candidates),
            "webview_origin": self.webview_origin,
            "js_enabled": self.js_enabled.value,
            "enclosing_component": self.enclosing_component,
            "in_webviewclient_callback": self.in_webviewclient_callback,
            "methods": [m.to_dict() for m in self.methods],
            "flows": [f.to_dict() for f in self.flows],
        }


@dataclass(frozen=True)
class AppFlags:
    uses_webview: bool = False
    js_enabled: bool = False
    injects_class: bool = False
    has_sensitive_flow: bool = False

    def to_dict(self) -> dict:
        return {"uses_webview": self.uses_webview, "js_enabled": self.js_enabled,
                "injects_class": self.injects_class,
                "has_sensitive_flow": self.has_sensitive_flow}


# ---------------------------------------------------------------------------

def _describe_origin(origin) -> str:
    if isinstance(origin, str):
        return origin
    ins: Instruction = origin
    if ins.opcode is Opcode.NEW_INSTANCE:
        return f"new {ins.type_desc}"
    if ins.opcode is Opcode.CHECK_CAST:
        return f"cast {ins.type_desc}"
    if ins.method is not None:
        return f"call {ins.method}"
    if ins.field is not None:
        return f"field {ins.field}"
    return f"opaque {ins.mnemonic}"


def _origin_type(origin, method: SmaliMethod) -> tuple:
    """(priority, type) for a bridge object origin; lower priority wins."""
    if isinstance(origin, str):
        reg = origin.split()[-1]
        return 3, method.param_type(reg)
    ins: Instruction = origin
    if ins.opcode is Opcode.NEW_INSTANCE:
        return 0, ins.type_desc
    if ins.opcode is Opcode.CHECK_CAST:
        return 1, ins.type_desc
    if ins.field is not None:
        return 2, ins.field.type
    if ins.method is not None:
        return 4, ins.method.return_type
    return 9, None


def resolve_bridged_class(method: SmaliMethod, index: int, register: str) -> tuple:
    """Best class descriptor for the object in ``register`` plus all candidates."""
    typed = [_origin_type(o, method) for o in origin_definitions(method, index, register)]
    typed = sorted({(p, t) for p, t in typed if t and t.startswith("L")})
    candidates = list(dict.fromkeys(t for _, t in typed))
    if not typed:
        return UNKNOWN_CLASS, []
    best = typed[0][0]
    top = sorted({t for p, t in typed if p == best})
    return (top[0] if len(top) == 1 else UNKNOWN_CLASS), candidates


def annotated_methods(program: SmaliProgram, descriptor: str) -> list:
    """Bridge-annotated methods of a class, inherited ones included."""
    seen = set()
    out = []
    for desc in program.superclass_chain(descriptor):
        cls = program.classes.get(desc)
        if cls is None:
            continue
        for m in cls.methods:
            key = (m.name, m.signature)
            if key in seen:
                continue
            seen.add(key)
            if m.is_bridge_annotated:
                out.append((cls, m))
    return out


def analyze_bridged_method(cls: SmaliClass, method: SmaliMethod,
                           sources: SensitiveSourceDB) -> BridgedMethod:
    hits = []
    for ins in method.body:
        if ins.opcode.is_invoke:
            entry = sources.lookup(ins.method)
            if entry is not None:
                hits.append((ins.index, entry))
    reaching: list = []
    returns = [ins for ins in method.body
               if ins.opcode in (Opcode.RETURN, Opcode.RETURN_OBJECT) and ins.operands]
    for ret in returns:
        sl = backward_slice(method, ret.index, ret.operands[0])
        for idx, entry in hits:
            if idx in sl and entry not in reaching:
                reaching.append(entry)
    return BridgedMethod(
        owner=cls.descriptor, name=method.name, signature=method.signature,
        returns_sensitive=bool(reaching),
        sources_hit=list(dict.fromkeys(e for _, e in hits)),
        sensitive_sources=reaching,
    )


def _js_setting_values(program: SmaliProgram, cls: SmaliClass) -> list:
    """Boolean (or None) arguments of setJavaScriptEnabled calls in ``cls``."""
    out = []
    for m in cls.methods:
        ev = None
        for ins in m.body:
            if not ins.opcode.is_invoke or not any(p.matches(ins.method, program) for p in SET_JS_ENABLED):
                continue
            if not ins.arg_registers:
                out.append(None)
                continue
            ev = ev or StringEvaluator(m, program)
            vals = ev.use(ins.index, ins.arg_registers[0])
            for v in vals:
                out.append(bool(v[1]) if v[0] == "i" else None)
    return out


def js_enabled_scope(program: SmaliProgram, enclosing: str, webview_types=()) -> list:
    """Classes searched for setJavaScriptEnabled: the enclosing class, in-app
    classes referenced by its fields (one level) and in-app WebView types."""
    scope = [enclosing]
    cls = program.classes.get(enclosing)
    if cls is not None:
        for fname in sorted(cls.fields):
            t = cls.fields[fname].type
            if t in program.classes and t not in scope:
                scope.append(t)
    for t in webview_types:
        if t in program.classes and t not in scope:
            scope.append(t)
    return scope


def determine_js_enabled(program: SmaliProgram, enclosing: str, webview_types=()) -> JsEnabled:
    values = []
    for desc in js_enabled_scope(program, enclosing, webview_types):
        values.extend(_js_setting_values(program, program.classes[desc]) if desc in program.classes else [])
    if any(v is True for v in values):
        return JsEnabled.YES
    if values and all(v is False for v in values):
        return JsEnabled.NO_EVIDENCE
    return JsEnabled.UNKNOWN


def _is_callback_name(name: str) -> bool:
    return (name.startswith("on") and len(name) > 2 and name[2].isupper()) or \
        name.startswith("should")


def callback_reachable(program: SmaliProgram, descriptor: str) -> set:
    """(name, signature) of methods reachable from WebView client callbacks.

    Empty unless the class extends WebViewClient or WebChromeClient.
    """
    cls = program.classes.get(descriptor)
    if cls is None:
        return set()
    if not (program.is_subclass(descriptor, WEBVIEW_CLIENT) or
            program.is_subclass(descriptor, WEBCHROME_CLIENT)):
        return set()
    own = {(m.name, m.signature): m for m in cls.methods}
    work = [k for k in own if _is_callback_name(k[0])]
    reached = set(work)
    while work:
        m = own[work.pop()]
        for ins in m.body:
            if ins.opcode.is_invoke and ins.method.cls == descriptor:
                key = (ins.method.name, ins.method.signature)
                if key in own and key not in reached:
                    reached.add(key)
                    work.append(key)
    return reached


def in_callback(program: SmaliProgram, site: CallSite, cache: Optional[dict] = None) -> bool:
    if cache is not None:
        if site.cls not in cache:
            cache[site.cls] = callback_reachable(program, site.cls)
        reach = cache[site.cls]
    else:
        reach = callback_reachable(program, site.cls)
    return (site.method_name, site.method_signature) in reach


def analyze_bridges(program: SmaliProgram, sources: Optional[SensitiveSourceDB] = None) -> list:
    sources = sources if sources is not None else SensitiveSourceDB.default()
    cb_cache: dict = {}
    out = []
    for site in find_call_sites(program, ADD_JS_INTERFACE):
        method = site.method
        obj_reg, name_reg = site.arg_registers[0], site.arg_registers[1]
        exposed = merge_variants(resolve_variants(method, site.index, name_reg, program))
        bridged, candidates = resolve_bridged_class(method, site.index, obj_reg)
        wv_origins = origin_definitions(method, site.index, site.receiver) if site.receiver else []
        wv_types = [t for _, t in (_origin_type(o, method) for o in wv_origins) if t]
        wv_types.append(site.callee.cls)
        injection = BridgeInjection(
            call_site=site,
            exposed_name=exposed,
            bridged_class=bridged,
            class_candidates=candidates,
            webview_origin="; ".join(sorted({_describe_origin(o) for o in wv_origins})) or "unknown",
            js_enabled=determine_js_enabled(program, site.cls, wv_types),
            enclosing_component=site.cls,
            in_webviewclient_callback=in_callback(program, site, cb_cache),
        )
        owners = [bridged] if bridged != UNKNOWN_CLASS else \
            [c for c in candidates if c in program.classes]
        seen = set()
        for owner in owners:
            for cls, m in annotated_methods(program, owner):
                if (cls.descriptor, m.name, m.signature) in seen:
                    continue
                seen.add((cls.descriptor, m.name, m.signature))
                bm = analyze_bridged_method(cls, m, sources)
                injection.methods.append(bm)
                for entry in bm.sensitive_sources:
                    injection.flows.append(SensitiveFlow(
                        method=bm.ref, source=str(entry), category=entry.category,
                        bridge_site=site.to_dict(),
                    ))
        out.append(injection)
    return out


def _references_webview(program: SmaliProgram) -> bool:
    def is_wv(t: Optional[str]) -> bool:
        if not t:
            return False
        t = t.lstrip("[")
        return t == WEBVIEW or (t in program.classes and program.is_subclass(t, WEBVIEW))

    for cls in program.classes.values():
        if is_wv(cls.descriptor):
            return True
        if any(is_wv(f.type) for f in cls.fields.values()):
            return True
        for m in cls.methods:
            if any(is_wv(t) for _, t in m.params) or is_wv(m.return_type):
                return True
            for ins in m.body:
                if ins.method is not None and (is_wv(ins.method.cls) or is_wv(ins.method.return_type)):
                    return True
                if ins.field is not None and (is_wv(ins.field.type) or is_wv(ins.field.cls)):
                    return True
                if is_wv(ins.type_desc):
                    return True
    return False


def any_js_enabled(program: SmaliProgram) -> bool:
    return any(v is True for cls in program.classes.values()
               for v in _js_setting_values(program, cls))


def app_flags(program: SmaliProgram, bridges: list, resolved_args=()) -> AppFlags:
    uses = bool(bridges) or bool(list(resolved_args)) or _references_webview(program)
    js = uses and any_js_enabled(program)
    injects = bool(bridges)
    sensitive = any(b.flows for b in bridges)
    return AppFlags(uses_webview=uses, js_enabled=js, injects_class=injects,
                    has_sensitive_flow=sensitive)
