"""Organization mapping, filter-list matching and traffic distribution tables."""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .domains import SuffixRules, registered_domain
from .errors import InputError
from .trace import FlowKey, Resolution, SkillSession, is_valid_hostname

log = logging.getLogger(__name__)

ORG_CATEGORIES = frozenset({
    "analytic_provider", "advertising_network", "content_provider",
    "platform_provider", "voice_assistant_service",
})
PARTIES = ("platform", "skill_vendor", "third_party")
PURPOSES = ("functional", "advertising_tracking")
UNKNOWN_ORG = "unknown"


# --------------------------------------------------------------------------- ontology


@dataclass(frozen=True)
class OrgEntry:
    org_name: str
    domains: tuple[str, ...]
    categories: frozenset[str]
    aliases: tuple[str, ...] = ()


@dataclass
class OrgOntology:
    entries: list[OrgEntry]
    _by_domain: dict[str, str] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_domain = {}
        names = set()
        for e in self.entries:
            if e.org_name in names:
                raise InputError(f"org {e.org_name!r} listed twice")
            names.add(e.org_name)
            if not e.categories:
                raise InputError(f"org {e.org_name!r} has no categories")
            bad = set(e.categories) - ORG_CATEGORIES
            if bad:
                raise InputError(f"org {e.org_name!r}: unknown categories {sorted(bad)}")
            for d in e.domains:
                d = d.lower()
                owner = self._by_domain.get(d)
                if owner is not None and owner != e.org_name:
                    raise InputError(f"domain {d!r} mapped to both {owner!r} and {e.org_name!r}")
                self._by_domain[d] = e.org_name

    @classmethod
    def from_json(cls, data: list[dict]) -> "OrgOntology":
        try:
            entries = [
                OrgEntry(
                    org_name=item["org_name"],
                    domains=tuple(d.lower() for d in item["domains"]),
                    categories=frozenset(item["categories"]),
                    aliases=tuple(item.get("aliases", ())),
                )
                for item in data
            ]
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed ontology entry: {exc}") from exc
        return cls(entries)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "OrgOntology":
        """Load an ontology file; with no path, the bundled one."""
        if path is None:
            text = resources.files("skillaudit").joinpath("data/orgs.json").read_text("utf-8")
        else:
            try:
                text = Path(path).read_text("utf-8")
            except OSError as exc:
                raise InputError(f"cannot read ontology {path}: {exc}") from exc
        return cls.from_json(json.loads(text))

    def org_for_domain(self, reg_domain: str) -> str | None:
        return self._by_domain.get(reg_domain)

    def get(self, org_name: str) -> OrgEntry | None:
        for e in self.entries:
            if e.org_name == org_name:
                return e
        return None

    @property
    def org_names(self) -> set[str]:
        return {e.org_name for e in self.entries}

    def merged(self, other: "OrgOntology") -> "OrgOntology":
        names = {e.org_name for e in other.entries}
        return OrgOntology([e for e in self.entries if e.org_name not in names] + list(other.entries))


# --------------------------------------------------------------------------- filter lists


@dataclass(frozen=True)
class FilterRule:
    pattern: str
    scope: str  # exact_host | domain_and_subdomains
    action: str = "block"

    def matches(self, host: str) -> bool:
        if self.scope == "exact_host":
            return host == self.pattern
        return host == self.pattern or host.endswith("." + self.pattern)


@dataclass
class FilterRuleSet:
    rules: list[FilterRule]
    source: str = ""

    def __post_init__(self):
        self._exact = frozenset(r.pattern for r in self.rules if r.scope == "exact_host")
        self._domains = frozenset(r.pattern for r in self.rules if r.scope == "domain_and_subdomains")

    def matches(self, hostname: str) -> bool:
        host = hostname.lower().rstrip(".")
        if host in self._exact:
            return True
        # walk label-aligned suffixes: a.b.c -> a.b.c, b.c, c
        while True:
            if host in self._domains:
                return True
            dot = host.find(".")
            if dot < 0:
                return False
            host = host[dot + 1:]

    def __len__(self):
        return len(self.rules)


_SINK_ADDRESSES = {"0.0.0.0", "127.0.0.1", "::", "::1", "::0"}


def parse_filter_list(path: str | Path, source: str | None = None) -> FilterRuleSet:
    """Parse a hosts-style (``0.0.0.0 host``) or bare-domain-per-line list.

    Bare domains block the domain and its subdomains; hosts-style entries block
    the exact host. Lines with extra whitespace-separated fields raise InputError
    naming the line.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read filter list {path}: {exc}") from exc
    return parse_filter_text(text, source or str(path))


def parse_filter_text(text: str, source: str = "") -> FilterRuleSet:
    rules = []
    bad = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("!"):  # "!" starts an adblock-style comment
            continue
        fields = line.split()
        if len(fields) == 1:
            host, scope = fields[0], "domain_and_subdomains"
        elif len(fields) == 2 and fields[0] in _SINK_ADDRESSES:
            host, scope = fields[1], "exact_host"
        else:
            bad.append(lineno)
            continue
        host = host.lower().rstrip(".")
        if "/" in host or ":" in host or not is_valid_hostname(host):
            bad.append(lineno)
            continue
        rules.append(FilterRule(host, scope))
    if bad:
        raise InputError(f"{source or 'filter list'}: unparseable lines {bad}")
    return FilterRuleSet(rules, source)


def load_overrides(path: str | Path) -> dict[str, str]:
    """Manual purpose overrides: JSON object hostname -> purpose."""
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read overrides {path}: {exc}") from exc
    for host, purpose in data.items():
        if purpose not in PURPOSES:
            raise InputError(f"override for {host!r} has unknown purpose {purpose!r}")
    return {h.lower(): p for h, p in data.items()}


def classify_purpose(hostname: str, rules: FilterRuleSet,
                     manual_overrides: Mapping[str, str] | None = None) -> str:
    host = hostname.lower().rstrip(".")
    if manual_overrides and host in manual_overrides:
        return manual_overrides[host]
    return "advertising_tracking" if rules.matches(host) else "functional"


# --------------------------------------------------------------------------- verdicts


@dataclass(frozen=True)
class SkillContext:
    skill_id: str
    vendor_domains: frozenset[str] = frozenset()


@dataclass(frozen=True)
class EndpointVerdict:
    hostname: str
    registered_domain: str
    org_name: str
    party: str
    purpose: str | None = None
    skill_id: str | None = None


def load_skill_catalog(path: str | Path) -> dict[str, SkillContext]:
    """Skill catalog JSON: ``{skill_id: {"vendor_domains": [...]}}``."""
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read skill catalog {path}: {exc}") from exc
    return {
        sid: SkillContext(sid, frozenset(d.lower() for d in info.get("vendor_domains", ())))
        for sid, info in data.items()
    }


def map_org(hostname: str, ontology: OrgOntology, skill_context: SkillContext | None = None,
            platform_org: str = "Amazon", suffix_rules: SuffixRules | None = None) -> EndpointVerdict:
    reg = registered_domain(hostname, suffix_rules)
    org = ontology.org_for_domain(reg) or UNKNOWN_ORG
    if org == platform_org:
        party = "platform"
    elif skill_context is not None and reg in skill_context.vendor_domains:
        party = "skill_vendor"
    else:
        party = "third_party"
    return EndpointVerdict(
        hostname=hostname.lower(),
        registered_domain=reg,
        org_name=org,
        party=party,
        skill_id=skill_context.skill_id if skill_context else None,
    )


@dataclass
class EndpointClassifier:
    """Bundles ontology, filter rules and overrides; memoizes per (host, skill)."""

    ontology: OrgOntology
    rules: FilterRuleSet
    overrides: Mapping[str, str] = field(default_factory=dict)
    skills: Mapping[str, SkillContext] = field(default_factory=dict)
    platform_org: str = "Amazon"
    _cache: dict = field(default_factory=dict, repr=False)

    def verdict(self, hostname: str, skill_id: str | None = None) -> EndpointVerdict:
        key = (hostname, skill_id)
        hit = self._cache.get(key)
        if hit is None:
            ctx = self.skills.get(skill_id) if skill_id else None
            if ctx is None and skill_id:
                ctx = SkillContext(skill_id)
            v = map_org(hostname, self.ontology, ctx, self.platform_org)
            hit = EndpointVerdict(v.hostname, v.registered_domain, v.org_name, v.party,
                                  classify_purpose(hostname, self.rules, self.overrides), v.skill_id)
            self._cache[key] = hit
        return hit

    def classify(self, sessions: list[SkillSession], resolution: Resolution) -> dict[FlowKey, EndpointVerdict]:
        by_sid = {s.session_id: s for s in sessions}
        return {
            key: self.verdict(host, by_sid[key[0]].skill_id)
            for key, host in resolution.flow_hosts.items()
        }


# --------------------------------------------------------------------------- tables


def _pct(part: float, total: float) -> float:
    return round(100.0 * part / total, 2) if total else 0.0


@dataclass
class Distribution:
    """Traffic shares and domain counts derived from classified flows.

    ``matrix`` maps party -> purpose -> percent of resolved flow weight.
    ``persona_counts`` maps persona -> (ATS third-party hosts, functional
    third-party hosts). ``skill_ats`` maps skill -> sorted third-party ATS hosts.
    """

    matrix: dict[str, dict[str, float]]
    party_totals: dict[str, float]
    purpose_totals: dict[str, float]
    persona_counts: dict[str, tuple[int, int]]
    skill_ats: dict[str, list[str]]
    resolved_weight: int
    unresolved_weight: int
    weight: str = "flows"


def traffic_distribution(sessions: list[SkillSession], verdicts: Mapping[FlowKey, EndpointVerdict],
                         weight: str = "flows", include_phases: Iterable[str] | None = None) -> Distribution:
    """Share of flows (or bytes) per party x purpose over resolved, non-DNS flows.

    Flows absent from ``verdicts`` count toward the unresolved bucket and are
    excluded from the percentages. Crawl-phase traffic is excluded unless
    ``include_phases`` says otherwise.
    """
    if weight not in ("flows", "bytes"):
        raise InputError(f"distribution.weight must be flows or bytes, not {weight!r}")
    phases = set(include_phases) if include_phases is not None else {"install", "interact", "idle"}

    cells: Counter = Counter()
    unresolved = 0
    persona_hosts: dict[str, dict[str, set[str]]] = defaultdict(lambda: defaultdict(set))
    skill_hosts: dict[str, set[str]] = defaultdict(set)

    for s in sessions:
        for idx, flow in enumerate(s.flows):
            if flow.protocol == "dns" or flow.phase not in phases:
                continue
            w = 1 if weight == "flows" else flow.byte_count
            v = verdicts.get((s.session_id, idx))
            if v is None:
                unresolved += w
                continue
            cells[(v.party, v.purpose)] += w
            if v.party == "third_party":
                persona_hosts[s.persona.name][v.purpose].add(v.hostname)
                if v.purpose == "advertising_tracking" and s.skill_id:
                    skill_hosts[s.skill_id].add(v.hostname)

    total = sum(cells.values())
    matrix = {p: {q: _pct(cells[(p, q)], total) for q in PURPOSES} for p in PARTIES}
    party_totals = {p: _pct(sum(cells[(p, q)] for q in PURPOSES), total) for p in PARTIES}
    purpose_totals = {q: _pct(sum(cells[(p, q)] for p in PARTIES), total) for q in PURPOSES}
    persona_counts = {
        name: (len(h["advertising_tracking"]), len(h["functional"]))
        for name, h in sorted(persona_hosts.items())
    }
    return Distribution(
        matrix=matrix,
        party_totals=party_totals,
        purpose_totals=purpose_totals,
        persona_counts=persona_counts,
        skill_ats={k: sorted(v) for k, v in sorted(skill_hosts.items())},
        resolved_weight=total,
        unresolved_weight=unresolved,
        weight=weight,
    )


@dataclass(frozen=True)
class DomainRow:
    party: str
    org_name: str
    domain: str          # hostname, or "*(n).registered" when n > 1 subdomains
    subdomains: int
    skills: int
    advertising_tracking: bool


def domain_table(sessions: list[SkillSession], verdicts: Mapping[FlowKey, EndpointVerdict],
                 include_phases: Iterable[str] | None = None) -> list[DomainRow]:
    """Contacted domains grouped by party and registered domain with skill counts.

    Subdomains of one registered domain collapse into a ``*(n).domain`` row, and
    a registered domain splits into ATS and functional rows when both occur.
    Rows are ordered by party, then descending skill count, then name.
    """
    phases = set(include_phases) if include_phases is not None else {"install", "interact", "idle"}
    groups: dict[tuple, dict] = {}
    for s in sessions:
        for idx, flow in enumerate(s.flows):
            if flow.protocol == "dns" or flow.phase not in phases:
                continue
            v = verdicts.get((s.session_id, idx))
            if v is None:
                continue
            key = (v.party, v.org_name, v.registered_domain, v.purpose == "advertising_tracking")
            g = groups.setdefault(key, {"hosts": set(), "skills": set()})
            g["hosts"].add(v.hostname)
            if s.skill_id:
                g["skills"].add(s.skill_id)

    rows = []
    for (party, org, reg, ats), g in groups.items():
        hosts = g["hosts"]
        label = next(iter(hosts)) if len(hosts) == 1 else f"*({len(hosts)}).{reg}"
        rows.append(DomainRow(party, org, label, len(hosts), len(g["skills"]), ats))
    order = {p: i for i, p in enumerate(PARTIES)}
    rows.sort(key=lambda r: (order[r.party], -r.skills, r.domain))
    return rows
