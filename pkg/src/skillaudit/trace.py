"""Trace data model, JSONL ingestion, session grouping and DNS-based host resolution."""

from __future__ import annotations

import ipaddress
import json
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Any, Iterable
from urllib.parse import urlsplit

from .errors import InputError, InvariantViolation

log = logging.getLogger(__name__)

PHASES = ("install", "interact", "idle", "crawl")
DIRECTIONS = ("outbound", "inbound")
PROTOCOLS = ("dns", "tls", "http")
PERSONA_KINDS = ("interest", "vanilla", "web_control")
HTTP_METHODS = ("GET", "POST", "other")

DEFAULT_BODY_EXCERPT_MAX = 4096
MALFORMED_FATAL_FRACTION = 0.10

_HOST_LABEL = re.compile(r"^(?!-)[a-z0-9_-]{1,63}(?<!-)$")


@lru_cache(maxsize=65536)
def is_valid_hostname(host: str) -> bool:
    if not host or len(host) > 253:
        return False
    host = host.rstrip(".").lower()
    return all(_HOST_LABEL.match(label) for label in host.split("."))


@dataclass(frozen=True, order=True)
class PersonaId:
    name: str
    kind: str = "interest"

    def __post_init__(self):
        if self.kind not in PERSONA_KINDS:
            raise ValueError(f"unknown persona kind {self.kind!r}")


@dataclass(frozen=True)
class DnsQuery:
    qname: str
    answers: tuple[str, ...] = ()


@dataclass(frozen=True)
class HttpEvent:
    method: str
    url: str
    request_headers: tuple[tuple[str, str], ...] = ()
    set_cookies: tuple[tuple[str, str], ...] = ()
    referer: str | None = None
    body_excerpt: str | None = None

    @cached_property
    def host(self) -> str:
        return (urlsplit(self.url).hostname or "").lower()


@dataclass(frozen=True)
class FlowRecord:
    session_id: str
    persona: PersonaId
    skill_id: str | None
    phase: str
    timestamp_ms: int
    direction: str
    dst_ip: str
    dst_port: int
    protocol: str
    byte_count: int = 0
    sni: str | None = None
    dns_query: DnsQuery | None = None
    http: HttpEvent | None = None


@dataclass
class SkillSession:
    session_id: str
    persona: PersonaId
    skill_id: str | None
    flows: list[FlowRecord]
    boundaries: tuple[int, int]


@dataclass
class TraceFile:
    """Result of reading one trace file: good records plus rejected lines."""

    records: list[FlowRecord]
    malformed: list[tuple[int, str]] = field(default_factory=list)
    total_lines: int = 0


# --------------------------------------------------------------------------- parsing


@lru_cache(maxsize=65536)
def _check_ip(value: str) -> str:
    """Canonical text form of an address; ValueError when it is not one."""
    if not isinstance(value, str):
        raise TypeError(f"address must be a string, got {value!r}")
    return str(ipaddress.ip_address(value))


def _truncate_utf8(text: str, max_bytes: int) -> str:
    raw = text.encode("utf-8")
    if len(raw) <= max_bytes:
        return text
    return raw[:max_bytes].decode("utf-8", errors="ignore")


def _pairs(value: Any, name: str) -> tuple[tuple[str, str], ...]:
    if value is None:
        return ()
    out = []
    for item in value:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise ValueError(f"{name} entries must be [name, value] pairs")
        out.append((str(item[0]), str(item[1])))
    return tuple(out)


def _parse_http(obj: dict, body_excerpt_max: int) -> HttpEvent:
    method = obj.get("method", "other")
    if method not in HTTP_METHODS:
        method = "other"
    url = obj["url"]
    parts = urlsplit(url)
    if not parts.scheme or not parts.hostname or not is_valid_hostname(parts.hostname):
        raise ValueError(f"http.url is not an absolute URL with a valid host: {url!r}")
    body = obj.get("body_excerpt")
    if body is not None:
        body = _truncate_utf8(str(body), body_excerpt_max)
    return HttpEvent(
        method=method,
        url=url,
        request_headers=_pairs(obj.get("request_headers"), "request_headers"),
        set_cookies=_pairs(obj.get("set_cookies"), "set_cookies"),
        referer=obj.get("referer"),
        body_excerpt=body,
    )


def flow_from_dict(obj: dict, body_excerpt_max: int = DEFAULT_BODY_EXCERPT_MAX) -> FlowRecord:
    """Build a FlowRecord from its JSON object form, validating the schema."""
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    persona = obj["persona"]
    if isinstance(persona, str):
        persona = PersonaId(persona)
    else:
        persona = PersonaId(persona["name"], persona.get("kind", "interest"))

    phase, direction, protocol = obj["phase"], obj["direction"], obj["protocol"]
    if phase not in PHASES:
        raise ValueError(f"bad phase {phase!r}")
    if direction not in DIRECTIONS:
        raise ValueError(f"bad direction {direction!r}")
    if protocol not in PROTOCOLS:
        raise ValueError(f"bad protocol {protocol!r}")

    ts = obj["timestamp_ms"]
    port = obj["dst_port"]
    nbytes = obj.get("byte_count", 0)
    for name, val in (("timestamp_ms", ts), ("dst_port", port), ("byte_count", nbytes)):
        if not isinstance(val, int) or isinstance(val, bool):
            raise ValueError(f"{name} must be an integer")
    if not 0 <= port <= 65535:
        raise ValueError("dst_port out of range")
    if nbytes < 0:
        raise ValueError("byte_count negative")
    _check_ip(obj["dst_ip"])

    sni = obj.get("sni")
    if sni is not None:
        sni = sni.lower()
        if not is_valid_hostname(sni):
            raise ValueError(f"bad sni {sni!r}")

    dns = None
    if obj.get("dns_query") is not None:
        q = obj["dns_query"]
        answers = tuple(_check_ip(a) for a in q.get("answers", []))
        dns = DnsQuery(q["qname"].lower().rstrip("."), answers)
    http = _parse_http(obj["http"], body_excerpt_max) if obj.get("http") is not None else None

    if protocol == "dns" and dns is None:
        raise ValueError("protocol=dns requires dns_query")
    if protocol == "http" and http is None:
        raise ValueError("protocol=http requires http")

    return FlowRecord(
        session_id=str(obj["session_id"]),
        persona=persona,
        skill_id=obj.get("skill_id"),
        phase=phase,
        timestamp_ms=ts,
        direction=direction,
        dst_ip=obj["dst_ip"],
        dst_port=port,
        protocol=protocol,
        byte_count=nbytes,
        sni=sni,
        dns_query=dns,
        http=http,
    )


def flow_to_dict(flow: FlowRecord) -> dict:
    http = None
    if flow.http is not None:
        h = flow.http
        http = {
            "method": h.method,
            "url": h.url,
            "request_headers": [list(p) for p in h.request_headers],
            "set_cookies": [list(p) for p in h.set_cookies],
            "referer": h.referer,
            "body_excerpt": h.body_excerpt,
        }
    dns = None
    if flow.dns_query is not None:
        dns = {"qname": flow.dns_query.qname, "answers": list(flow.dns_query.answers)}
    return {
        "session_id": flow.session_id,
        "persona": {"name": flow.persona.name, "kind": flow.persona.kind},
        "skill_id": flow.skill_id,
        "phase": flow.phase,
        "timestamp_ms": flow.timestamp_ms,
        "direction": flow.direction,
        "dst_ip": flow.dst_ip,
        "dst_port": flow.dst_port,
        "protocol": flow.protocol,
        "sni": flow.sni,
        "dns_query": dns,
        "http": http,
        "byte_count": flow.byte_count,
    }


def dumps_flow(flow: FlowRecord) -> str:
    """Canonical one-line JSON: sorted keys, compact separators."""
    return json.dumps(flow_to_dict(flow), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_trace(flows: Iterable[FlowRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for flow in flows:
            fh.write(dumps_flow(flow))
            fh.write("\n")


def _sort_key(flow: FlowRecord):
    return (flow.session_id, flow.timestamp_ms)


def load_trace(path: str | Path, body_excerpt_max: int = DEFAULT_BODY_EXCERPT_MAX) -> TraceFile:
    """Read a JSONL trace, keeping malformed lines as (line number, reason).

    Raises InputError if the file cannot be read or if more than 10% of the
    non-blank lines are malformed.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read trace {path}: {exc}") from exc

    records: list[FlowRecord] = []
    malformed: list[tuple[int, str]] = []
    total = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        total += 1
        try:
            records.append(flow_from_dict(json.loads(line), body_excerpt_max))
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            malformed.append((lineno, f"{type(exc).__name__}: {exc}"))

    if total and len(malformed) > MALFORMED_FATAL_FRACTION * total:
        lines = ", ".join(str(n) for n, _ in malformed[:50])
        raise InputError(
            f"{path}: {len(malformed)} of {total} lines malformed (lines {lines})"
        )
    for lineno, reason in malformed:
        log.warning("%s:%d: skipped malformed record (%s)", path, lineno, reason)

    records.sort(key=_sort_key)
    return TraceFile(records, malformed, total)


def ingest_trace(path: str | Path, format: str = "jsonl",
                 body_excerpt_max: int = DEFAULT_BODY_EXCERPT_MAX) -> list[FlowRecord]:
    if format != "jsonl":
        raise InputError(f"unsupported trace format {format!r}")
    return load_trace(path, body_excerpt_max).records


# --------------------------------------------------------------------------- sessions


def segment_sessions(flows: Iterable[FlowRecord]) -> list[SkillSession]:
    """Group flows by session_id, in order of first appearance.

    A session whose flows carry two different skill_ids, or whose timestamps
    go backwards, is corrupt and raises InvariantViolation.
    """
    groups: dict[str, list[FlowRecord]] = {}
    for flow in flows:
        groups.setdefault(flow.session_id, []).append(flow)

    sessions = []
    for sid, members in groups.items():
        skills = {f.skill_id for f in members}
        if len(skills) > 1:
            raise InvariantViolation(
                f"session {sid!r} labeled with several skills: {sorted(map(str, skills))}"
            )
        personas = {f.persona for f in members}
        if len(personas) > 1:
            raise InvariantViolation(f"session {sid!r} spans several personas")
        times = [f.timestamp_ms for f in members]
        if any(b < a for a, b in zip(times, times[1:])):
            raise InvariantViolation(f"session {sid!r} is not sorted by timestamp")
        sessions.append(SkillSession(
            session_id=sid,
            persona=members[0].persona,
            skill_id=members[0].skill_id,
            flows=members,
            boundaries=(min(times), max(times)),
        ))
    return sessions


# --------------------------------------------------------------------------- resolution

FlowKey = tuple[str, int]  # (session_id, index of the flow inside its session)


@dataclass
class Resolution:
    """Hostname attribution for every non-DNS flow.

    ``flow_hosts`` is keyed by (session_id, position in session). ``hostnames``
    is the coarser (session_id, dst_ip) view; ``unresolved`` lists flows with
    no supporting evidence.
    """

    flow_hosts: dict[FlowKey, str]
    sources: dict[FlowKey, str]
    unresolved: list[FlowKey]
    warnings: list[str] = field(default_factory=list)

    def hostnames(self, sessions: list[SkillSession]) -> dict[tuple[str, str], str]:
        out: dict[tuple[str, str], str] = {}
        by_sid = {s.session_id: s for s in sessions}
        for (sid, idx), host in sorted(self.flow_hosts.items()):
            out.setdefault((sid, by_sid[sid].flows[idx].dst_ip), host)
        return out


def resolve_domains(sessions: list[SkillSession]) -> Resolution:
    """Attribute a hostname to every non-DNS flow.

    Precedence: SNI, then the HTTP URL host, then the qname of the most recent
    DNS answer for dst_ip seen at or before the flow in the same persona's
    stream. Two qnames answering the same IP at the same instant tie-break to
    the lexicographically smallest, with a warning.
    """
    streams: dict[PersonaId, list[tuple[int, int, str, int, FlowRecord]]] = defaultdict(list)
    for s in sessions:
        for idx, flow in enumerate(s.flows):
            # DNS answers sort before other traffic at the same instant
            rank = 0 if flow.protocol == "dns" else 1
            streams[s.persona].append((flow.timestamp_ms, rank, s.session_id, idx, flow))

    flow_hosts: dict[FlowKey, str] = {}
    sources: dict[FlowKey, str] = {}
    unresolved: list[FlowKey] = []
    warnings: list[str] = []

    for persona in sorted(streams):
        events = sorted(streams[persona], key=lambda e: e[:4])
        # ip -> (timestamp of answer, qname)
        latest: dict[str, tuple[int, str]] = {}
        for ts, _, sid, idx, flow in events:
            if flow.protocol == "dns":
                q = flow.dns_query
                for ip in q.answers:
                    prev = latest.get(ip)
                    if prev is not None and prev[0] == ts and prev[1] != q.qname:
                        winner = min(prev[1], q.qname)
                        msg = (f"persona {persona.name}: {ip} answered as both {prev[1]} "
                               f"and {q.qname} at {ts}; using {winner}")
                        warnings.append(msg)
                        log.warning(msg)
                        latest[ip] = (ts, winner)
                    else:
                        latest[ip] = (ts, q.qname)
                continue
            key = (sid, idx)
            if flow.sni:
                flow_hosts[key], sources[key] = flow.sni, "sni"
            elif flow.http is not None and flow.http.host:
                flow_hosts[key], sources[key] = flow.http.host, "http"
            elif flow.dst_ip in latest:
                flow_hosts[key], sources[key] = latest[flow.dst_ip][1], "dns"
            else:
                unresolved.append(key)

    unresolved.sort()
    return Resolution(flow_hosts, sources, unresolved, warnings)
