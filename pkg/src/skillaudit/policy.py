"""Privacy-policy consistency checking for observed data flows.

A data flow is a ``<data type, entity>`` tuple taken from traffic. It is checked
against a policy's sentences: a sentence counts only if it carries a
collection/sharing verb and is not negated. An exact org name (entity mode) or
exact data-type synonym (data mode) makes the disclosure *clear*; a broader
ontology term, org category or generic "third party" wording makes it *vague*.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence
from urllib.parse import parse_qsl, urlsplit

from .endpoints import EndpointVerdict, OrgOntology
from .errors import InputError
from .trace import FlowKey, SkillSession

log = logging.getLogger(__name__)

VERDICTS = ("clear", "vague", "omitted", "no_policy")
# omitted and no_policy rank equally: neither discloses anything
_RANK = {"clear": 3, "vague": 2, "omitted": 1, "no_policy": 1}


def _bundled(name: str) -> str:
    return resources.files("skillaudit").joinpath(f"data/{name}").read_text("utf-8")


def _read_json(path: str | Path | None, bundled: str):
    if path is None:
        return json.loads(_bundled(bundled))
    try:
        return json.loads(Path(path).read_text("utf-8"))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


# --------------------------------------------------------------------------- text


def normalize_text(text: str) -> str:
    text = unicodedata.normalize("NFKC", text)
    text = text.replace("’", "'").replace("‘", "'").replace("“", '"').replace("”", '"')
    return " ".join(text.split())


def _match_form(text: str) -> str:
    """Lowercase, hyphens/slashes as spaces: the form terms are matched in."""
    return " ".join(re.sub(r"[-\u2010-\u2014_/]", " ", text.lower()).split())


_BOUNDARY = re.compile(r"[.!?][\"')\]]*\s+(?=[\"'(]?[A-Z])")


def split_sentences(text: str, abbreviations: Iterable[str] = ()) -> list[str]:
    """Split normalized text into sentences.

    A boundary is ``.``, ``!`` or ``?`` (plus any closing quotes/brackets)
    followed by whitespace and an uppercase letter. No split happens after a
    listed abbreviation or a single-letter initial. Joining the result with
    single spaces gives back the input.
    """
    abbrevs = {a.lower() for a in abbreviations}
    sentences, start = [], 0
    for m in _BOUNDARY.finditer(text):
        head = text[start:m.start() + 1]
        last_word = head.rsplit(None, 1)[-1].lower() if head.strip() else ""
        last_word = last_word.lstrip("(\"'")
        if last_word in abbrevs or re.fullmatch(r"[a-z]\.", last_word):
            continue
        end = m.start() + len(m.group(0).rstrip())
        sentences.append(text[start:end])
        start = m.end()
    tail = text[start:]
    if tail:
        sentences.append(tail)
    return sentences


def _term_regex(terms: Iterable[str]) -> re.Pattern | None:
    forms = sorted({_match_form(t) for t in terms if t.strip()}, key=len, reverse=True)
    if not forms:
        return None
    alts = "|".join(r"\s+".join(map(re.escape, f.split())) + r"(?:s|es)?" for f in forms)
    return re.compile(rf"(?<![a-z0-9])(?:{alts})(?![a-z0-9])")


# --------------------------------------------------------------------------- ontologies


@dataclass
class DataOntology:
    parents: dict[str, str | None]
    synonyms: dict[str, list[str]]
    leaf_types: list[str] = field(default_factory=list)
    ignored_terms: list[str] = field(default_factory=list)

    def __post_init__(self):
        for node, parent in self.parents.items():
            if parent is not None and parent not in self.parents:
                raise InputError(f"data ontology: {node!r} has unknown parent {parent!r}")
        for node in self.parents:
            seen = set()
            cur = node
            while cur is not None:
                if cur in seen:
                    raise InputError(f"data ontology has a cycle through {node!r}")
                seen.add(cur)
                cur = self.parents[cur]
        for leaf in self.leaf_types:
            if leaf not in self.parents:
                raise InputError(f"data ontology: leaf type {leaf!r} is not a node")

    @classmethod
    def load(cls, path: str | Path | None = None) -> "DataOntology":
        data = _read_json(path, "data_ontology.json")
        nodes = data["nodes"]
        return cls(
            parents={k: v.get("parent") for k, v in nodes.items()},
            synonyms={k: list(v.get("synonyms", [])) for k, v in nodes.items()},
            leaf_types=list(data.get("leaf_types", [])),
            ignored_terms=list(data.get("ignored_terms", [])),
        )

    def ancestors(self, node: str) -> list[str]:
        out, cur = [], self.parents.get(node)
        while cur is not None:
            out.append(cur)
            cur = self.parents[cur]
        return out

    def terms(self, node: str) -> list[str]:
        ignored = {_match_form(t) for t in self.ignored_terms}
        own = [node.replace("_", " "), *self.synonyms.get(node, [])]
        return [t for t in own if _match_form(t) not in ignored]


@dataclass
class Lexicon:
    verbs: list[str]
    negations: list[str]
    category_terms: dict[str, list[str]]
    generic_entity_terms: list[str]
    abbreviations: list[str]

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Lexicon":
        d = _read_json(path, "lexicon.json")
        return cls(d["verbs"], d["negations"], d["category_terms"],
                   d["generic_entity_terms"], d.get("abbreviations", []))


# --------------------------------------------------------------------------- documents


@dataclass
class PolicyDocument:
    skill_id: str
    text: str
    sentences: list[str]
    source_url: str | None = None
    includes_platform_policy: bool = False

    @classmethod
    def from_text(cls, skill_id: str, raw: str, lexicon: Lexicon | None = None,
                  source_url: str | None = None, includes_platform_policy: bool = False) -> "PolicyDocument":
        lexicon = lexicon or Lexicon.load()
        text = normalize_text(raw)
        return cls(skill_id, text, split_sentences(text, lexicon.abbreviations),
                   source_url, includes_platform_policy)


def load_policies(directory: str | Path, lexicon: Lexicon | None = None) -> dict[str, PolicyDocument]:
    """Every ``<skill_id>.txt`` in ``directory``, keyed by skill id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"policy directory {directory} does not exist")
    lexicon = lexicon or Lexicon.load()
    out = {}
    for path in sorted(directory.glob("*.txt")):
        out[path.stem] = PolicyDocument.from_text(path.stem, path.read_text("utf-8"), lexicon)
    return out


# --------------------------------------------------------------------------- flows & verdicts


@dataclass(frozen=True)
class DataFlowTuple:
    skill_id: str
    entity: str
    data_type: str | None = None  # None: entity-only tuple (endpoint analysis)

    @property
    def mode(self) -> str:
        return "entity" if self.data_type is None else "data"


def tuple_sort_key(t: DataFlowTuple) -> tuple[str, str, str]:
    return (t.skill_id, t.data_type or "", t.entity)


@dataclass(frozen=True)
class DisclosureVerdict:
    tuple: DataFlowTuple
    verdict: str
    evidence_sentence: str | None = None
    matched_term: str | None = None
    source: str | None = None  # "skill" or "platform"


class StatementExtractor(Protocol):
    """Decides whether a sentence is a (non-negated) collection/sharing statement."""

    def is_disclosure(self, sentence: str) -> bool: ...


class RuleExtractor:
    """Verb-lexicon extractor: a sentence discloses if it has a collection or
    sharing verb and no negation cue before that verb."""

    def __init__(self, lexicon: Lexicon):
        self._verb = _term_regex_exact(lexicon.verbs)
        neg = [n for n in lexicon.negations if n != "n't"]
        self._neg = _term_regex_exact(neg)
        self._contraction = "n't" in lexicon.negations

    def is_disclosure(self, sentence: str) -> bool:
        s = _match_form(sentence)
        verb = self._verb.search(s)
        if verb is None:
            return False
        before = s[:verb.start()]
        if self._neg.search(before):
            return False
        if self._contraction and "n't" in before:
            return False
        return True


def _term_regex_exact(words: Iterable[str]) -> re.Pattern:
    forms = sorted({_match_form(w) for w in words}, key=len, reverse=True)
    alts = "|".join(r"\s+".join(map(re.escape, f.split())) for f in forms)
    return re.compile(rf"(?<![a-z0-9'])(?:{alts})(?![a-z0-9])")


class DisclosureClassifier:
    """Classifies DataFlowTuples against policy documents.

    Holds the compiled term patterns for both ontologies so repeated calls are
    cheap. ``extractor`` can be swapped for any StatementExtractor.
    """

    def __init__(self, data_ontology: DataOntology, org_ontology: OrgOntology,
                 lexicon: Lexicon | None = None, extractor: StatementExtractor | None = None):
        self.data_ontology = data_ontology
        self.org_ontology = org_ontology
        self.lexicon = lexicon or Lexicon.load()
        self.extractor = extractor or RuleExtractor(self.lexicon)
        self._patterns: dict = {}

    def _entity_patterns(self, entity: str):
        key = ("entity", entity)
        if key not in self._patterns:
            entry = self.org_ontology.get(entity)
            exact = [entity] + list(entry.aliases if entry else ())
            vague = list(self.lexicon.generic_entity_terms)
            if entry is not None:
                for cat in sorted(entry.categories):
                    vague += self.lexicon.category_terms.get(cat, [])
            self._patterns[key] = (_term_regex(exact) if entity != "unknown" else None, _term_regex(vague))
        return self._patterns[key]

    def _data_patterns(self, data_type: str):
        key = ("data", data_type)
        if key not in self._patterns:
            if data_type not in self.data_ontology.parents:
                raise InputError(f"data type {data_type!r} is not in the data ontology")
            exact = self.data_ontology.terms(data_type)
            vague = [t for a in self.data_ontology.ancestors(data_type) for t in self.data_ontology.terms(a)]
            self._patterns[key] = (_term_regex(exact), _term_regex(vague))
        return self._patterns[key]

    def classify(self, tup: DataFlowTuple, policy: PolicyDocument | None,
                 source: str = "skill") -> DisclosureVerdict:
        if policy is None:
            return DisclosureVerdict(tup, "no_policy", source=source)
        if tup.data_type is None:
            exact, vague = self._entity_patterns(tup.entity)
        else:
            exact, vague = self._data_patterns(tup.data_type)

        first_vague = None
        for sentence in policy.sentences:
            if not self.extractor.is_disclosure(sentence):
                continue
            form = _match_form(sentence)
            m = exact.search(form) if exact else None
            if m:
                return DisclosureVerdict(tup, "clear", sentence, m.group(0), source)
            if first_vague is None and vague is not None:
                m = vague.search(form)
                if m:
                    first_vague = (sentence, m.group(0))
        if first_vague:
            return DisclosureVerdict(tup, "vague", first_vague[0], first_vague[1], source)
        return DisclosureVerdict(tup, "omitted", source=source)


def classify_disclosure(tup: DataFlowTuple, policy: PolicyDocument | None, data_ontology: DataOntology,
                        org_ontology: OrgOntology, lexicon: Lexicon | None = None) -> DisclosureVerdict:
    return DisclosureClassifier(data_ontology, org_ontology, lexicon).classify(tup, policy)


@dataclass
class SkillAudit:
    skill_id: str
    verdicts: list[DisclosureVerdict]

    @property
    def summary(self) -> dict[str, int]:
        c = Counter(v.verdict for v in self.verdicts)
        return {k: c.get(k, 0) for k in VERDICTS}


def audit_skill(skill_id: str, tuples: Sequence[DataFlowTuple], policies: Mapping[str, PolicyDocument],
                classifier: DisclosureClassifier, include_platform_policy: bool = False,
                platform_policy: PolicyDocument | None = None) -> SkillAudit:
    """Verdict per tuple of one skill. With ``include_platform_policy`` the
    platform's policy is also checked and the clearer verdict wins; a platform
    "omitted" never replaces a skill "no_policy"."""
    policy = policies.get(skill_id)
    out = []
    for tup in sorted((t for t in tuples if t.skill_id == skill_id), key=tuple_sort_key):
        v = classifier.classify(tup, policy, "skill")
        if include_platform_policy and platform_policy is not None:
            pv = classifier.classify(tup, platform_policy, "platform")
            if _RANK[pv.verdict] > _RANK[v.verdict]:
                v = pv
        out.append(v)
    return SkillAudit(skill_id, out)


def disclosure_table(audits: Iterable[SkillAudit]) -> dict[str, dict[str, int]]:
    """Per data type (or entity for entity-only tuples): number of skills in
    each verdict bucket, as in the disclosure tables of the report."""
    table: dict[str, Counter] = defaultdict(Counter)
    for audit in audits:
        for v in audit.verdicts:
            key = v.tuple.data_type or f"entity:{v.tuple.entity}"
            table[key][v.verdict] += 1
    return {k: {b: c.get(b, 0) for b in VERDICTS} for k, c in sorted(table.items())}


# --------------------------------------------------------------------------- flow extraction


@dataclass(frozen=True)
class Signature:
    data_type: str
    kind: str  # body | header | key
    pattern: re.Pattern
    name: str | None = None


def load_signatures(path: str | Path | None = None) -> list[Signature]:
    data = _read_json(path, "signatures.json")
    return [Signature(d["data_type"], d["kind"], re.compile(d["pattern"]), d.get("name")) for d in data]


_KEY = re.compile(r"[\"']?([A-Za-z_][A-Za-z0-9_.\-]*)[\"']?\s*[:=]")


def detect_data_types(http, signatures: Sequence[Signature]) -> set[str]:
    body = http.body_excerpt or ""
    keys = set(_KEY.findall(body))
    keys |= {k for k, _ in parse_qsl(urlsplit(http.url).query, keep_blank_values=True)}
    headers = {n.lower(): v for n, v in http.request_headers}
    keys |= {n for n in headers if n in ("accept-language",)}
    found = set()
    for sig in signatures:
        if sig.kind == "body":
            hit = bool(body) and sig.pattern.search(body) is not None
        elif sig.kind == "header":
            hit = sig.pattern.search(headers.get(sig.name or "", "")) is not None
        else:
            hit = any(sig.pattern.match(k) for k in keys)
        if hit:
            found.add(sig.data_type)
    return found


def extract_flows(sessions: Sequence[SkillSession], verdicts: Mapping[FlowKey, EndpointVerdict],
                  unencrypted: bool = False, signatures: Sequence[Signature] | None = None) -> list[DataFlowTuple]:
    """Data-flow tuples from skill sessions.

    Every contacted org yields an entity-only tuple. With ``unencrypted`` the
    HTTP payloads are also matched against the signatures, giving
    ``<data type, org>`` tuples. Sessions without a skill are skipped.
    """
    sigs = signatures if signatures is not None else load_signatures()
    out: set[DataFlowTuple] = set()
    for s in sessions:
        if not s.skill_id or s.flows[0].phase == "crawl":
            continue
        for idx, flow in enumerate(s.flows):
            v = verdicts.get((s.session_id, idx))
            if v is None:
                continue
            out.add(DataFlowTuple(s.skill_id, v.org_name))
            if unencrypted and flow.http is not None:
                for dt in detect_data_types(flow.http, sigs):
                    out.add(DataFlowTuple(s.skill_id, v.org_name, dt))
    return sorted(out, key=tuple_sort_key)


# --------------------------------------------------------------------------- gold labels


def load_gold(path: str | Path) -> list[DisclosureVerdict]:
    """Gold CSV with columns skill_id, data_type, entity, verdict (blank data_type
    for entity-only rows)."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"cannot read gold labels {path}: {exc}") from exc
    out = []
    for i, row in enumerate(rows, start=2):
        verdict = (row.get("verdict") or "").strip()
        if verdict not in VERDICTS:
            raise InputError(f"{path}:{i}: unknown verdict {verdict!r}")
        tup = DataFlowTuple(row["skill_id"].strip(), row["entity"].strip(), (row.get("data_type") or "").strip() or None)
        out.append(DisclosureVerdict(tup, verdict))
    return out


def write_gold(verdicts: Iterable[DisclosureVerdict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["skill_id", "data_type", "entity", "verdict"])
        for v in verdicts:
            w.writerow([v.tuple.skill_id, v.tuple.data_type or "", v.tuple.entity, v.verdict])
