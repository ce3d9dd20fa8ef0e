"""Cookie-sync detection over crawl HTTP traffic and the partner graph around one org."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence
from urllib.parse import parse_qsl, unquote, urlsplit

from .trace import FlowRecord

log = logging.getLogger(__name__)

DEFAULT_MIN_ID_LENGTH = 8

_PIECE_SPLIT = re.compile(r"[^A-Za-z0-9_\-.~]+")
_DIGITS = re.compile(r"^\d+$")
_TIMESTAMP = re.compile(r"^1\d{9}(\d{3})?(\.\d+)?$")
_LOCALE = re.compile(r"^[A-Za-z]{2,3}([-_][A-Za-z]{2,4}){0,2}$")
_DIMENSION = re.compile(r"^\d{1,4}[xX]\d{1,4}$")
_HOSTLIKE = re.compile(r"^(?:[a-z0-9-]+\.)+[a-z]{2,}$")
_WORD = re.compile(r"^[a-z]+([-_.][a-z]+)*$")
_DECIMAL = re.compile(r"^\d+\.\d+$")


def is_low_entropy(value: str) -> bool:
    """Value shapes that are never user identifiers: short digit runs,
    epoch timestamps, locales, WxH dimensions, hostnames, plain words,
    decimals."""
    return bool(
        (_DIGITS.match(value) and len(value) < 6)
        or _TIMESTAMP.match(value)
        or _LOCALE.match(value)
        or _DIMENSION.match(value)
        or _HOSTLIKE.match(value)
        or _WORD.match(value)
        or _DECIMAL.match(value)
    )


def pieces(value: str) -> list[str]:
    """Split a (possibly percent-encoded, possibly nested) value into
    identifier-shaped pieces."""
    prev = None
    while prev != value:
        prev, value = value, unquote(value)
    return [p for p in _PIECE_SPLIT.split(value) if p]


def candidate(piece: str, min_length: int) -> bool:
    return len(piece) >= min_length and not is_low_entropy(piece)


@dataclass(frozen=True)
class IdentifierToken:
    value: str
    origin_org: str
    source: str  # cookie_value | query_param | path_segment
    first_seen_ms: int


@dataclass(frozen=True)
class SyncEvent:
    token: IdentifierToken
    sender_org: str
    receiver_org: str
    evidence_url: str
    timestamp_ms: int
    via_referer: bool = False


def _http_flows(flows: Iterable[FlowRecord]) -> list[FlowRecord]:
    # stable order: time, then URL, so equal-timestamp reorderings do not matter
    return sorted((f for f in flows if f.http is not None),
                  key=lambda f: (f.timestamp_ms, f.http.url, f.session_id))


def _url_pieces(url: str) -> list[tuple[str, str]]:
    parts = urlsplit(url)
    out = []
    for _, v in parse_qsl(parts.query, keep_blank_values=True):
        out.extend(("query_param", p) for p in pieces(v))
    for seg in parts.path.split("/"):
        out.extend(("path_segment", p) for p in pieces(seg))
    return out


def extract_identifiers(flows: Iterable[FlowRecord], org_of: Callable[[str], str],
                        min_id_length: int = DEFAULT_MIN_ID_LENGTH) -> list[IdentifierToken]:
    """Harvest identifier-shaped values from Set-Cookie values, query
    parameters and path segments. The org of the first flow carrying a value
    becomes its origin."""
    seen: dict[str, IdentifierToken] = {}
    for flow in _http_flows(flows):
        http = flow.http
        org = org_of(http.host)
        found = [("cookie_value", p) for _, v in http.set_cookies for p in pieces(v)]
        found += _url_pieces(http.url)
        for source, value in found:
            if value in seen or not candidate(value, min_id_length):
                continue
            seen[value] = IdentifierToken(value, org, source, flow.timestamp_ms)
    return sorted(seen.values(), key=lambda t: (t.first_seen_ms, t.value))


def detect_syncs(tokens: Sequence[IdentifierToken], flows: Iterable[FlowRecord],
                 org_of: Callable[[str], str]) -> list[SyncEvent]:
    """Emit one event per (token, sender, receiver) when a token minted by
    one org shows up verbatim in a later request URL to a different org."""
    index = {t.value: t for t in tokens}
    events: dict[tuple[str, str, str], SyncEvent] = {}
    for flow in _http_flows(flows):
        http = flow.http
        receiver = org_of(http.host)
        ref_org = org_of((urlsplit(http.referer).hostname or "")) if http.referer else None
        for _, value in _url_pieces(http.url):
            tok = index.get(value)
            if tok is None or tok.origin_org == receiver or flow.timestamp_ms <= tok.first_seen_ms:
                continue
            key = (tok.value, tok.origin_org, receiver)
            if key not in events:
                events[key] = SyncEvent(tok, tok.origin_org, receiver, http.url,
                                        flow.timestamp_ms, via_referer=(ref_org == tok.origin_org))
    return sorted(events.values(), key=lambda e: (e.timestamp_ms, e.token.value, e.sender_org, e.receiver_org))


@dataclass
class PartnerGraph:
    focus_org: str
    nodes: list[str]
    edges: list[tuple[str, str, int]]

    @classmethod
    def from_events(cls, events: Iterable[SyncEvent], focus_org: str) -> "PartnerGraph":
        counts = Counter((e.sender_org, e.receiver_org) for e in events)
        nodes = sorted({o for pair in counts for o in pair})
        edges = sorted((s, r, n) for (s, r), n in counts.items())
        return cls(focus_org, nodes, edges)

    def neighbours(self, org: str) -> set[str]:
        out = set()
        for s, r, _ in self.edges:
            if s == org:
                out.add(r)
            elif r == org:
                out.add(s)
        return out

    def to_json(self) -> dict:
        return {
            "focus_org": self.focus_org,
            "nodes": self.nodes,
            "edges": [{"sender": s, "receiver": r, "count": n} for s, r, n in self.edges],
        }


@dataclass
class PartnerSets:
    direct_partners: set[str] = field(default_factory=set)
    second_hop: set[str] = field(default_factory=set)
    inbound: set[str] = field(default_factory=set)   # orgs that sync into the focus org
    outbound: set[str] = field(default_factory=set)  # orgs the focus org syncs to


def partner_sets(events: Iterable[SyncEvent], focus_org: str) -> PartnerSets:
    events = list(events)
    adj: dict[str, set[str]] = {}
    inbound, outbound = set(), set()
    for e in events:
        adj.setdefault(e.sender_org, set()).add(e.receiver_org)
        adj.setdefault(e.receiver_org, set()).add(e.sender_org)
        if e.receiver_org == focus_org:
            inbound.add(e.sender_org)
        if e.sender_org == focus_org:
            outbound.add(e.receiver_org)
    if focus_org not in adj:
        log.warning("focus org %r has no sync edges", focus_org)
        return PartnerSets()
    direct = set(adj[focus_org])
    second = set()
    for org in direct:
        second |= adj.get(org, set())
    second -= direct | {focus_org}
    return PartnerSets(direct, second, inbound, outbound)


def events_to_json(events: Sequence[SyncEvent]) -> list[dict]:
    return [
        {
            "token": e.token.value,
            "token_source": e.token.source,
            "first_seen_ms": e.token.first_seen_ms,
            "sender_org": e.sender_org,
            "receiver_org": e.receiver_org,
            "evidence_url": e.evidence_url,
            "timestamp_ms": e.timestamp_ms,
            "via_referer": e.via_referer,
        }
        for e in events
    ]


def dumps_events(events: Sequence[SyncEvent]) -> str:
    return json.dumps(events_to_json(events), sort_keys=True, indent=2)
