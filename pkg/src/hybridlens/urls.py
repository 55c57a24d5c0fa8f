"""Strict RFC 3986 URI validation, feature extraction and host categorization."""

from __future__ import annotations

import dataclasses
import enum
import ipaddress
import logging
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from pathlib import Path
from typing import Optional
from urllib.parse import unquote

from .dataflow import HOLE_TOKEN

logger = logging.getLogger(__name__)

MAX_PORT = 65535

ALPHA = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
DIGIT = frozenset("0123456789")
HEXDIG = DIGIT | frozenset("abcdefABCDEF")
UNRESERVED = ALPHA | DIGIT | frozenset("-._~")
SUB_DELIMS = frozenset("!$&'()*+,;=")
PCHAR = UNRESERVED | SUB_DELIMS | frozenset(":@")
QUERY_CHARS = PCHAR | frozenset("/?")
USERINFO_CHARS = UNRESERVED | SUB_DELIMS | frozenset(":")
REG_NAME_CHARS = UNRESERVED | SUB_DELIMS
SCHEME_CHARS = ALPHA | DIGIT | frozenset("+-.")

SDK_CATEGORIES = (
    "Social", "App Monetization", "Web Services", "Untrusted/Unknown",
    "Online App Generator", "Outsourcing", "Mobile Development", "ECommerce", "Others",
)
UNTRUSTED = "Untrusted/Unknown"
NETWORK_SCHEMES = ("http", "https", "ftp")
INSECURE_SCHEMES = ("http", "ftp")


class SchemeClass(str, enum.Enum):
    HTTPS = "HTTPS"
    HTTP = "HTTP"
    FILE = "FILE"
    ABOUT_BLANK = "ABOUT_BLANK"
    JAVASCRIPT = "JAVASCRIPT"
    OTHER = "OTHER"
    MALFORMED = "MALFORMED"


class HostKind(str, enum.Enum):
    DOMAIN = "DOMAIN"
    IPV4 = "IPV4"
    IPV6 = "IPV6"
    NONE = "NONE"


@dataclass
class UrlRecord:
    raw: str
    valid: Optional[bool]  # None when not validated (javascript: or holes)
    scheme_class: SchemeClass
    diagnostics: list = field(default_factory=list)
    protocol: Optional[str] = None
    userinfo: Optional[str] = None
    host: Optional[str] = None
    port: Optional[int] = None
    port_text: str = ""  # digits as written, for reconstruction
    path: Optional[str] = None
    search: Optional[str] = None
    fragment: Optional[str] = None
    has_authority: bool = False
    empty_port: bool = False  # "host:" with no digits
    host_kind: HostKind = HostKind.NONE
    insecure_transport: bool = False
    sdk_category: Optional[str] = None
    sdk_name: Optional[str] = None
    embedded_url: Optional["UrlRecord"] = None

    @property
    def resolved(self) -> bool:
        return HOLE_TOKEN not in self.raw

    def reconstruct(self) -> str:
        out = [self.protocol or "", ":"]
        if self.has_authority:
            out.append("//")
            if self.userinfo is not None:
                out.append(self.userinfo + "@")
            out.append(self.host or "")
            if self.port is not None:
                out.append(f":{self.port_text}")
            elif self.empty_port:
                out.append(":")
        out.append(self.path or "")
        if self.search is not None:
            out.append("?" + self.search)
        if self.fragment is not None:
            out.append("#" + self.fragment)
        return "".join(out)

    def to_dict(self) -> dict:
        return {
            "raw": self.raw,
            "valid": self.valid,
            "scheme_class": self.scheme_class.value,
            "diagnostics": list(self.diagnostics),
            "protocol": self.protocol,
            "userinfo": self.userinfo,
            "host": self.host,
            "port": self.port,
            "path": self.path,
            "search": self.search,
            "fragment": self.fragment,
            "host_kind": self.host_kind.value,
            "insecure_transport": self.insecure_transport,
            "sdk_category": self.sdk_category,
            "sdk_name": self.sdk_name,
            "embedded_url": self.embedded_url.to_dict() if self.embedded_url else None,
        }


class _Invalid(Exception):
    pass


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _char_name(c: str) -> str:
    return f"{c!r} (U+{ord(c):04X})"


class _Validator:
    """Recursive-descent checker for the RFC 3986 ``URI`` production."""

    def __init__(self, text: str):
        self.text = text
        self.rec = UrlRecord(raw=text, valid=False, scheme_class=SchemeClass.MALFORMED)

    def fail(self, pos: int, message: str):
        raise _Invalid(f"{message} at byte {_byte_offset(self.text, pos)}")

    def check_chars(self, start: int, end: int, allowed: frozenset, where: str):
        t = self.text
        i = start
        while i < end:
            c = t[i]
            if c == "%":
                if i + 2 < end and t[i + 1] in HEXDIG and t[i + 2] in HEXDIG:
                    i += 3
                    continue
                self.fail(i, f"invalid percent-encoding in {where}")
            if c not in allowed:
                self.fail(i, f"illegal character {_char_name(c)} in {where}")
            i += 1

    def run(self) -> UrlRecord:
        t = self.text
        rec = self.rec
        if not t:
            raise _Invalid("empty string is not a URI")
        colon = t.find(":")
        if colon < 0:
            raise _Invalid("missing scheme (no ':' found)")
        if colon == 0:
            self.fail(0, "empty scheme")
        if t[0] not in ALPHA:
            self.fail(0, f"scheme must start with a letter, found {_char_name(t[0])}")
        for i in range(1, colon):
            if t[i] not in SCHEME_CHARS:
                self.fail(i, f"illegal character {_char_name(t[i])} in scheme")
        rec.protocol = t[:colon].lower()
        pos = colon + 1
        hash_at = t.find("#", pos)
        frag_end = len(t)
        query_end = hash_at if hash_at >= 0 else frag_end
        q_at = t.find("?", pos, query_end)
        hier_end = q_at if q_at >= 0 else query_end
        # check left to right so the first diagnostic is the leftmost error
        self.hier_part(pos, hier_end)
        if q_at >= 0:
            self.check_chars(q_at + 1, query_end, QUERY_CHARS, "query")
            rec.search = t[q_at + 1:query_end]
        if hash_at >= 0:
            self.check_chars(hash_at + 1, frag_end, QUERY_CHARS, "fragment")
            rec.fragment = t[hash_at + 1:]
        return rec

    def hier_part(self, pos: int, end: int):
        t = self.text
        rec = self.rec
        if t.startswith("//", pos) and pos + 2 <= end:
            rec.has_authority = True
            a_start = pos + 2
            slash = t.find("/", a_start, end)
            a_end = slash if slash >= 0 else end
            self.authority(a_start, a_end)
            self.path(a_end, end, "path")
            return
        if pos < end and t[pos] == "/":
            # path-absolute: must not begin with "//" (handled above)
            self.path(pos, end, "path")
            return
        if pos < end:
            self.path(pos, end, "path")
            return
        rec.path = ""

    def path(self, start: int, end: int, where: str):
        t = self.text
        i = start
        seg_start = start
        while i <= end:
            if i == end or t[i] == "/":
                self.check_chars(seg_start, i, PCHAR, where)
                seg_start = i + 1
            i += 1
        self.rec.path = t[start:end]

    def authority(self, start: int, end: int):
        t = self.text
        rec = self.rec
        at = t.find("@", start, end)
        host_start = start
        if at >= 0:
            self.check_chars(start, at, USERINFO_CHARS, "userinfo")
            rec.userinfo = t[start:at]
            host_start = at + 1
        if host_start < end and t[host_start] == "[":
            close = t.find("]", host_start, end)
            if close < 0:
                self.fail(host_start, "unterminated IP literal")
            self.ip_literal(host_start + 1, close)
            rec.host = t[host_start:close + 1]
            rest = close + 1
            if rest < end and t[rest] != ":":
                self.fail(rest, f"illegal character {_char_name(t[rest])} after IP literal")
            self.port(rest, end)
            return
        colon = t.find(":", host_start, end)
        host_end = colon if colon >= 0 else end
        self.check_chars(host_start, host_end, REG_NAME_CHARS, "authority")
        rec.host = t[host_start:host_end]
        if not rec.host:
            rec.host_kind = HostKind.NONE
        elif _is_ipv4(rec.host):
            rec.host_kind = HostKind.IPV4
        else:
            rec.host_kind = HostKind.DOMAIN
        self.port(host_end, end)

    def port(self, start: int, end: int):
        rec = self.rec
        if start >= end:
            return
        digits = self.text[start + 1:end]
        for k, c in enumerate(digits):
            if c not in DIGIT:
                self.fail(start + 1 + k, f"illegal character {_char_name(c)} in port")
        if not digits:
            rec.empty_port = True
            return
        value = int(digits)
        if value > MAX_PORT:
            self.fail(start + 1, f"port {digits} exceeds {MAX_PORT}")
        rec.port = value
        rec.port_text = digits

    def ip_literal(self, start: int, end: int):
        t = self.text
        body = t[start:end]
        if body[:1] in ("v", "V"):
            m = re.fullmatch(r"[vV]([0-9A-Fa-f]+)\.(.+)", body)
            if not m:
                self.fail(start, "malformed IPvFuture literal")
            self.check_chars(start + len(m.group(1)) + 2, end,
                             UNRESERVED | SUB_DELIMS | frozenset(":"), "IP literal")
        else:
            if not body or any(c not in HEXDIG and c not in ":." for c in body):
                self.fail(start, "malformed IPv6 address")
            try:
                ipaddress.IPv6Address(body)
            except ValueError:
                self.fail(start, "malformed IPv6 address")
        self.rec.host_kind = HostKind.IPV6


_DEC_OCTET = r"(?:25[0-5]|2[0-4][0-9]|1[0-9]{2}|[1-9][0-9]|[0-9])"
_IPV4_RE = re.compile(rf"^{_DEC_OCTET}(?:\.{_DEC_OCTET}){{3}}$")


def _is_ipv4(host: str) -> bool:
    return bool(_IPV4_RE.match(host))


def _scheme_class(protocol: str) -> SchemeClass:
    return {"http": SchemeClass.HTTP, "https": SchemeClass.HTTPS,
            "file": SchemeClass.FILE}.get(protocol, SchemeClass.OTHER)


def _partial_record(raw: str) -> UrlRecord:
    """Record for a string with unresolved holes: classify by literal prefix."""
    rec = UrlRecord(raw=raw, valid=None, scheme_class=SchemeClass.OTHER)
    prefix = raw.split(HOLE_TOKEN, 1)[0]
    m = re.match(r"^([A-Za-z][A-Za-z0-9+.-]*):", prefix)
    if not m:
        rec.diagnostics.append("unresolved: scheme is not fully literal")
        return rec
    rec.protocol = m.group(1).lower()
    rec.scheme_class = _scheme_class(rec.protocol)
    rec.diagnostics.append("unresolved: validity undecided")
    rest = prefix[m.end():]
    if rest.startswith("//"):
        auth_end = re.search(r"[/?#]", rest[2:])
        if auth_end is not None:
            authority = rest[2:2 + auth_end.start()]
            hostport = authority.rsplit("@", 1)[-1]
            host, _, port = hostport.partition(":")
            rec.has_authority = True
            rec.host = host
            rec.host_kind = HostKind.IPV4 if _is_ipv4(host) else (
                HostKind.DOMAIN if host else HostKind.NONE)
            if port.isdigit() and int(port) <= MAX_PORT:
                rec.port = int(port)
                rec.port_text = port
    rec.insecure_transport = rec.protocol in INSECURE_SCHEMES
    return rec


def _embedded(rec: UrlRecord) -> Optional[UrlRecord]:
    if not rec.search:
        return None
    for pair in rec.search.split("&"):
        key, sep, value = pair.partition("=")
        if sep and key.lower() == "url":
            value = unquote(value)
            if value.lower().startswith(("http://", "https://")):
                return parse_and_validate(value)
    return None


def parse_and_validate(raw: str) -> UrlRecord:
    if raw[:11].lower() == "javascript:":
        return UrlRecord(raw=raw, valid=None, scheme_class=SchemeClass.JAVASCRIPT,
                         protocol="javascript")
    if HOLE_TOKEN in raw:
        return _partial_record(raw)
    stripped = raw.strip()
    is_blank = stripped.lower() == "about:blank"
    try:
        rec = _Validator(stripped if is_blank else raw).run()
    except _Invalid as exc:
        return UrlRecord(raw=raw, valid=False, scheme_class=SchemeClass.MALFORMED,
                         diagnostics=[str(exc)])
    rec.raw = raw
    rec.valid = True
    rec.scheme_class = SchemeClass.ABOUT_BLANK if is_blank else _scheme_class(rec.protocol)
    rec.insecure_transport = rec.protocol in INSECURE_SCHEMES
    rec.embedded_url = _embedded(rec)
    if rec.embedded_url is not None:
        rec.diagnostics.append("embedded URL in query parameter 'url'")
    return rec


# ---------------------------------------------------------------------------
# SDK host categorization

@dataclass(frozen=True)
class SdkHost:
    suffix: str
    sdk_name: str
    category: str


@dataclass(frozen=True)
class SdkHostDB:
    entries: tuple

    @classmethod
    def parse(cls, text: str, where: str = "<sdk-db>") -> "SdkHostDB":
        from .bridges import ConfigError
        entries = []
        for n, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 2)
            if len(parts) != 3:
                raise ConfigError(f"{where}:{n}: expected 'host_suffix sdk_name category'")
            if parts[2] not in SDK_CATEGORIES:
                raise ConfigError(f"{where}:{n}: unknown category {parts[2]!r}")
            entries.append(SdkHost(parts[0].lower().lstrip("."), parts[1], parts[2]))
        return cls(tuple(entries))

    @classmethod
    def load(cls, path) -> "SdkHostDB":
        path = Path(path)
        return cls.parse(path.read_text(encoding="utf-8"), str(path))

    @classmethod
    def default(cls) -> "SdkHostDB":
        text = resources.files("hybridlens").joinpath("data/sdk_hosts.txt").read_text("utf-8")
        return cls.parse(text, "sdk_hosts.txt")

    def match(self, host: str) -> Optional[SdkHost]:
        host = host.lower().rstrip(".")
        best = None
        for e in self.entries:
            if host == e.suffix or host.endswith("." + e.suffix):
                if best is None or len(e.suffix) > len(best.suffix):
                    best = e
        return best


def categorize_host(record: UrlRecord, db: SdkHostDB) -> UrlRecord:
    if not record.host:
        return record
    hit = db.match(record.host)
    if hit is None:
        return dataclasses.replace(record, sdk_category=UNTRUSTED, sdk_name=None)
    return dataclasses.replace(record, sdk_category=hit.category, sdk_name=hit.sdk_name)


# ---------------------------------------------------------------------------
# corpus statistics

def percent(part: int, whole: int) -> float:
    """Percentage rounded half-up to two decimals."""
    if not whole:
        return 0.0
    q = (Decimal(part) * 100 / Decimal(whole)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return float(q)


def corpus_url_stats(records) -> dict:
    records = list(records)
    resolved = [r for r in records if r.resolved and r.scheme_class is not SchemeClass.JAVASCRIPT]
    counts = {c.value: 0 for c in SchemeClass if c is not SchemeClass.JAVASCRIPT}
    for r in resolved:
        counts[r.scheme_class.value] += 1
    network = [r for r in resolved if r.valid and r.protocol in NETWORK_SCHEMES]
    web = [r for r in network if r.protocol in ("http", "https")]
    pairs = {((r.host or "").lower(), r.path or "/") for r in network}
    ports = sum(1 for r in network if r.port is not None)
    search = sum(1 for r in web if r.search)
    insecure = sum(1 for r in resolved if r.insecure_transport)
    categories = {c: 0 for c in SDK_CATEGORIES}
    for r in network:
        if r.sdk_category:
            categories[r.sdk_category] = categories.get(r.sdk_category, 0) + 1
    return {
        "total": len(records),
        "javascript": sum(1 for r in records if r.scheme_class is SchemeClass.JAVASCRIPT),
        "unresolved": sum(1 for r in records if not r.resolved
                          and r.scheme_class is not SchemeClass.JAVASCRIPT),
        "resolved": len(resolved),
        "valid": sum(1 for r in resolved if r.valid),
        "malformed": counts[SchemeClass.MALFORMED.value],
        "scheme_counts": counts,
        "scheme_percentages": {k: percent(v, len(resolved)) for k, v in counts.items()},
        "network_urls": len(network),
        "distinct_paths": len(pairs),
        "port_specified": ports,
        "port_specified_pct": percent(ports, len(network)),
        "search_specified": search,
        "search_specified_pct": percent(search, len(web)),
        "insecure": insecure,
        "insecure_pct": percent(insecure, len(resolved)),
        "sdk_categories": categories,
    }
