"""End-to-end audit: ingest -> resolve -> classify -> syncs -> bids -> policy -> interests."""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

from . import bids as bidlib
from .config import AuditConfig
from .domains import registered_domain
from .endpoints import (
    EndpointClassifier, FilterRuleSet, OrgOntology, domain_table, load_overrides,
    load_skill_catalog, parse_filter_list, traffic_distribution,
)
from .errors import AuditError, InputError, StageError
from .interests import diff_interests, load_snapshots
from .metrics import metrics_from_confusion
from .policy import (
    VERDICTS, DataOntology, DisclosureClassifier, Lexicon, PolicyDocument, audit_skill,
    disclosure_table, extract_flows, load_gold, load_policies, load_signatures,
)
from .report import AuditReport, Pct, Table
from .syncs import PartnerGraph, detect_syncs, events_to_json, extract_identifiers, partner_sets
from .trace import FlowRecord, Resolution, SkillSession, load_trace, resolve_domains, segment_sessions

log = logging.getLogger(__name__)

STAGES = ("ingest", "resolve", "classify", "syncs", "bids", "policy", "interests")


def parse_stages(selection: str | Sequence[str] | None) -> list[str]:
    """Validate a stage selection; it must be a prefix of the pipeline order."""
    if selection is None:
        return list(STAGES)
    names = [s.strip() for s in selection.split(",")] if isinstance(selection, str) else list(selection)
    names = [n for n in names if n]
    unknown = [n for n in names if n not in STAGES]
    if unknown:
        raise InputError(f"unknown stage(s) {unknown}; stages are {', '.join(STAGES)}")
    if names != list(STAGES[: len(names)]):
        raise InputError(f"--stages must be a prefix of {','.join(STAGES)}, got {','.join(names)}")
    return names


# --------------------------------------------------------------------------- helpers


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def input_files(config: AuditConfig) -> list[Path]:
    files: list[Path] = []
    for name, val in config.data["paths"].items():
        targets = config.paths(name) if isinstance(val, list) else ([config.path(name)] if val else [])
        for p in targets:
            if p.is_dir():
                files.extend(sorted(q for q in p.rglob("*") if q.is_file()))
            else:
                files.append(p)
    return files


def fingerprint(config: AuditConfig) -> dict:
    digests = {config.display(p): file_digest(p) for p in input_files(config)}
    h = hashlib.sha256()
    for name in sorted(digests):
        h.update(f"{name}\0{digests[name]}\n".encode())
    return {"files": digests, "dataset": h.hexdigest()}


class _Collector(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.messages: list[str] = []

    def emit(self, record):
        self.messages.append(f"{record.levelname.lower()}: {record.getMessage()}")


@contextmanager
def collect_warnings() -> Iterator[list[str]]:
    handler = _Collector()
    root = logging.getLogger("skillaudit")
    root.addHandler(handler)
    try:
        yield handler.messages
    finally:
        root.removeHandler(handler)


# --------------------------------------------------------------------------- state


@dataclass
class AuditState:
    config: AuditConfig
    report: AuditReport
    flows: list[FlowRecord] = field(default_factory=list)
    sessions: list[SkillSession] = field(default_factory=list)
    resolution: Resolution | None = None
    classifier: EndpointClassifier | None = None
    verdicts: dict = field(default_factory=dict)
    partners: set[str] | None = None
    sync_orgs: set[str] = field(default_factory=set)


def _require(config: AuditConfig, name: str, stage: str) -> Path | list[Path]:
    val = config.data["paths"][name]
    if isinstance(val, list):
        paths = config.paths(name)
        if not paths:
            raise InputError(f"stage {stage} needs paths.{name}")
        return paths
    if val is None:
        raise InputError(f"stage {stage} needs paths.{name}")
    return config.path(name)


def load_sessions(paths: Sequence[Path], body_excerpt_max: int) -> tuple[list[FlowRecord], list[SkillSession], dict]:
    flows: list[FlowRecord] = []
    info = {}
    for p in paths:
        tf = load_trace(p, body_excerpt_max)
        flows.extend(tf.records)
        info[p] = {"records": len(tf.records), "malformed_lines": [n for n, _ in tf.malformed]}
    flows.sort(key=lambda f: (f.session_id, f.timestamp_ms))
    return flows, segment_sessions(flows), info


def build_classifier(config: AuditConfig) -> EndpointClassifier:
    ontology = OrgOntology.load(config.path("org_ontology"))
    rules = []
    for p in config.paths("filter_lists"):
        rules.extend(parse_filter_list(p).rules)
    overrides = load_overrides(config.path("overrides")) if config.path("overrides") else {}
    skills = load_skill_catalog(config.path("skills")) if config.path("skills") else {}
    return EndpointClassifier(ontology, FilterRuleSet(rules, "combined"), overrides, skills,
                              config.get("platform_org"))


# --------------------------------------------------------------------------- stages


def stage_ingest(st: AuditState) -> None:
    cfg = st.config
    paths = _require(cfg, "traces", "ingest")
    st.flows, st.sessions, info = load_sessions(paths, cfg.get("ingest.body_excerpt_max"))
    st.report.sections["ingest"] = {
        "files": {cfg.display(p): v for p, v in info.items()},
        "records": len(st.flows),
        "sessions": len(st.sessions),
        "personas": sorted({s.persona.name for s in st.sessions}),
        "skills": sorted({s.skill_id for s in st.sessions if s.skill_id}),
    }


def stage_resolve(st: AuditState) -> None:
    st.resolution = res = resolve_domains(st.sessions)
    by_source = Counter(res.sources.values())
    unresolved_ips = Counter()
    by_sid = {s.session_id: s for s in st.sessions}
    for sid, idx in res.unresolved:
        unresolved_ips[by_sid[sid].flows[idx].dst_ip] += 1
    st.report.sections["resolution"] = {
        "resolved": len(res.flow_hosts),
        "unresolved": len(res.unresolved),
        "by_source": dict(sorted(by_source.items())),
        "unresolved_ips": dict(sorted(unresolved_ips.items())),
        "dns_conflicts": res.warnings,
    }
    rows = [[src, by_source.get(src, 0)] for src in ("sni", "http", "dns")]
    rows.append(["unresolved", len(res.unresolved)])
    st.report.add_table(Table("resolution", "Host attribution by evidence source", ["Source", "Flows"], rows))


def stage_classify(st: AuditState) -> None:
    cfg = st.config
    st.classifier = build_classifier(cfg)
    st.verdicts = st.classifier.classify(st.sessions, st.resolution)
    dist = traffic_distribution(st.sessions, st.verdicts, cfg.get("distribution.weight"))
    rows = domain_table(st.sessions, st.verdicts)
    platform = cfg.get("platform_org")

    st.report.add_table(Table(
        "table1_domains", "Domains contacted by skills",
        ["Party", "Organization", "Domain", "Skills", "Advertising & Tracking"],
        [[r.party, r.org_name, r.domain, r.skills, "yes" if r.advertising_tracking else "no"] for r in rows],
    ))
    labels = {"platform": platform, "skill_vendor": "Skill vendor", "third_party": "Third party"}
    t2 = [[labels[p], Pct(dist.matrix[p]["functional"]), Pct(dist.matrix[p]["advertising_tracking"]),
           Pct(dist.party_totals[p])] for p in ("platform", "skill_vendor", "third_party")]
    t2.append(["Total", Pct(dist.purpose_totals["functional"]), Pct(dist.purpose_totals["advertising_tracking"]),
               Pct(100.0 if dist.resolved_weight else 0.0)])
    st.report.add_table(Table(
        "table2_distribution", "Distribution of advertising/tracking and functional traffic by organization (%)",
        ["Organization", "Functional", "Advertising & Tracking", "Total"], t2,
    ))
    st.report.add_table(Table(
        "table3_persona_third_party", "Third-party domains contacted per persona",
        ["Persona", "Advertising & Tracking", "Functional"],
        [[name, ats, fun] for name, (ats, fun) in dist.persona_counts.items()],
    ))
    st.report.add_table(Table(
        "table4_skill_ats", "Third-party advertising and tracking domains per skill",
        ["Skill", "Domains", "Advertising & Tracking"],
        [[skill, len(hosts), hosts] for skill, hosts in
         sorted(dist.skill_ats.items(), key=lambda kv: (-len(kv[1]), kv[0]))],
    ))
    st.report.sections["distribution"] = {
        "weight": dist.weight,
        "resolved_weight": dist.resolved_weight,
        "unresolved_weight": dist.unresolved_weight,
        "matrix": {p: {q: Pct(v) for q, v in row.items()} for p, row in dist.matrix.items()},
        "party_totals": {p: Pct(v) for p, v in dist.party_totals.items()},
        "purpose_totals": {q: Pct(v) for q, v in dist.purpose_totals.items()},
    }


def _org_resolver(classifier: EndpointClassifier):
    def org_of(host: str) -> str:
        if not host:
            return "unknown"
        org = classifier.verdict(host).org_name
        # unmapped hosts keep their registered domain so distinct ad orgs stay distinct
        return org if org != "unknown" else registered_domain(host)
    return org_of


def stage_syncs(st: AuditState) -> None:
    cfg = st.config
    crawl = [f for f in st.flows if f.phase == "crawl" and f.http is not None]
    org_of = _org_resolver(st.classifier)
    tokens = extract_identifiers(crawl, org_of, cfg.get("sync.min_id_length"))
    events = detect_syncs(tokens, crawl, org_of)
    focus = cfg.get("platform_org")
    graph = PartnerGraph.from_events(events, focus)
    ps = partner_sets(events, focus)
    st.partners = ps.direct_partners
    st.sync_orgs = set(graph.nodes)
    st.report.sections["syncs"] = {
        "crawl_requests": len(crawl),
        "tokens": len(tokens),
        "events": len(events),
        "focus_org": focus,
        "direct_partners": sorted(ps.direct_partners),
        "second_hop": sorted(ps.second_hop),
        "syncing_into_focus": sorted(ps.inbound),
        "focus_syncing_out": sorted(ps.outbound),
        "graph": graph.to_json(),
        "events": events_to_json(events),
    }
    st.report.add_table(Table("sync_summary", f"Cookie syncing around {focus}", ["Metric", "Value"], [
        ["identifier tokens", len(tokens)],
        ["sync events", len(events)],
        ["orgs in sync graph", len(graph.nodes)],
        [f"direct partners of {focus}", len(ps.direct_partners)],
        [f"third parties syncing into {focus}", len(ps.inbound)],
        [f"third parties {focus} syncs to", len(ps.outbound)],
        ["second-hop partners", len(ps.second_hop)],
    ]))


def _persona_groups(bids: Sequence[bidlib.BidRecord], control: str | None):
    order: dict[str, str] = {}
    for b in bids:
        order.setdefault(b.persona.name, b.persona.kind)
    if control is None:
        vanilla = [n for n, k in order.items() if k == "vanilla"]
        if len(vanilla) != 1:
            raise InputError(f"cannot pick a control persona: found vanilla personas {vanilla}; set bids.control")
        control = vanilla[0]
    elif control not in order:
        raise InputError(f"control persona {control!r} has no bids")
    treatments = [n for n, k in order.items() if k == "interest" and n != control]
    web = [n for n, k in order.items() if k == "web_control"]
    return control, treatments, web


def stage_bids(st: AuditState) -> None:
    cfg = st.config
    all_bids = bidlib.load_bids(_require(cfg, "bids", "bids"))
    known = None
    if st.partners is not None:
        known = (st.classifier.ontology.org_names if st.classifier else set()) | st.sync_orgs
    add_bid_tables(st.report, all_bids, cfg, st.partners, known)


def add_bid_tables(report: AuditReport, all_bids: Sequence[bidlib.BidRecord], cfg: AuditConfig,
                   partners: set[str] | None = None, known_orgs: set[str] | None = None,
                   parts: Sequence[str] = ("stats", "compare", "split")) -> None:
    """Bid aggregate, significance, partner-split and Echo-vs-web tables.

    The split table needs ``partners``; the Echo-vs-web table needs personas
    of kind web_control.
    """
    control, treatments, web = _persona_groups(all_bids, cfg.get("bids.control"))
    key = cfg.get("slots.key")
    cutoff, bonf = cfg.get("stats.exact_cutoff"), cfg.get("stats.bonferroni")
    echo = treatments + [control]
    common = bidlib.common_slots(all_bids, echo, key)
    section: dict = {
        "control": control,
        "treatments": treatments,
        "web_personas": web,
        "bids_total": len(all_bids),
        "bids_common": len(common),
        "common_slots": len({bidlib.slot_key(b, key) for b in common}),
    }

    if "stats" in parts:
        aggs = bidlib.aggregate(common, echo)
        section["aggregate"] = {n: {"n": a.n, "median_cpm": a.median_cpm, "mean_cpm": a.mean_cpm}
                                for n, a in aggs.items()}
        report.add_table(Table("bids_median_mean", "Median and mean bid values (CPM)", ["Persona", "Median", "Mean"],
                               [[n, aggs[n].median_cpm, aggs[n].mean_cpm] for n in echo]))

    if "compare" in parts:
        rows = bidlib.persona_comparison(all_bids, treatments, control, cutoff, bonf, key)
        section["comparison"] = [_stat_json(r.treatment, r.result, r.p_adjusted, r.significant) for r in rows]
        section["significant_treatments"] = sum(r.significant for r in rows)
        report.add_table(Table(
            "bids_significance", f"One-sided Mann-Whitney U: interest personas vs {control}",
            ["Persona", "p-value", "Effect size", "Size", "Significant"],
            [[r.treatment, r.p_adjusted, r.result.effect_size_r, r.result.size_label,
              "yes" if r.significant else "no"] for r in rows],
        ))
        if web:
            cells = bidlib.cross_group_comparison(all_bids, treatments, web, cutoff, bonf, key)
            section["cross_group"] = {
                "note": "null: distributions similar; significance judged on the two-sided p-value, "
                        "one-sided (echo greater) p-values reported alongside",
                "cells": [{"a": c.a, "b": c.b, "p_two_sided": c.p_two_sided, "p_one_sided": c.result.p_value,
                           "effect_size_r": c.result.effect_size_r, "significant": c.significant} for c in cells],
            }
            grid = {(c.a, c.b): c for c in cells}
            report.add_table(Table(
                "bids_echo_web", "Two-sided Mann-Whitney U p-values: Echo vs web interest personas",
                ["Persona", *web], [[a, *[grid[(a, b)].p_two_sided for b in web]] for a in treatments],
            ))

    if "split" in parts and partners is not None:
        labeled = bidlib.label_bidders(common, partners, known_orgs)
        split = bidlib.partner_split(labeled)
        section["partner_split"] = [{
            "persona": s.persona,
            "partner": {"n": s.partner.n, "median_cpm": s.partner.median_cpm, "mean_cpm": s.partner.mean_cpm},
            "non_partner": {"n": s.non_partner.n, "median_cpm": s.non_partner.median_cpm,
                            "mean_cpm": s.non_partner.mean_cpm},
            "median_ratio": s.median_ratio,
            "mean_ratio": s.mean_ratio,
        } for s in split]
        by_name = {s.persona: s for s in split}
        report.add_table(Table(
            "bids_partner_split", "Median and mean bids from partner and non-partner advertisers",
            ["Persona", "Partner median", "Partner mean", "Non-partner median", "Non-partner mean"],
            [[n, by_name[n].partner.median_cpm, by_name[n].partner.mean_cpm,
              by_name[n].non_partner.median_cpm, by_name[n].non_partner.mean_cpm] for n in echo if n in by_name],
        ))
    report.sections["bids"] = section


def _stat_json(name, res, p_adj, significant) -> dict:
    return {
        "persona": name, "u_statistic": res.u_statistic, "p_value": res.p_value, "p_adjusted": p_adj,
        "effect_size_r": res.effect_size_r, "size_label": res.size_label, "method": res.method,
        "n_treatment": res.n_treatment, "n_control": res.n_control, "significant": significant,
    }


def stage_policy(st: AuditState) -> None:
    cfg = st.config
    policies_dir = _require(cfg, "policies", "policy")
    lexicon = Lexicon.load(cfg.path("lexicon"))
    policies = load_policies(policies_dir, lexicon)
    platform_policy = None
    if cfg.path("platform_policy"):
        platform_policy = PolicyDocument.from_text("__platform__", cfg.path("platform_policy").read_text("utf-8"),
                                                   lexicon, includes_platform_policy=True)
    include_platform = cfg.get("policy.include_platform_policy")
    classifier = DisclosureClassifier(DataOntology.load(cfg.path("data_ontology")), st.classifier.ontology, lexicon)
    signatures = load_signatures(cfg.path("signatures"))

    tuples = extract_flows(st.sessions, st.verdicts, unencrypted=False)
    avs = cfg.paths("avs_traces")
    if avs:
        _, avs_sessions, _ = load_sessions(avs, cfg.get("ingest.body_excerpt_max"))
        avs_verdicts = st.classifier.classify(avs_sessions, resolve_domains(avs_sessions))
        tuples += [t for t in extract_flows(avs_sessions, avs_verdicts, True, signatures) if t.data_type]

    skills = sorted({t.skill_id for t in tuples})
    audits = [audit_skill(s, tuples, policies, classifier, include_platform, platform_policy) for s in skills]
    totals = Counter(v.verdict for a in audits for v in a.verdicts)
    table = disclosure_table(audits)
    section: dict = {
        "skills": len(skills),
        "skills_with_policy": sum(1 for s in skills if s in policies),
        "include_platform_policy": include_platform,
        "summary": {k: totals.get(k, 0) for k in VERDICTS},
        "per_skill": {a.skill_id: a.summary for a in audits},
        "verdicts": [{
            "skill_id": v.tuple.skill_id, "entity": v.tuple.entity, "data_type": v.tuple.data_type,
            "verdict": v.verdict, "evidence_sentence": v.evidence_sentence, "matched_term": v.matched_term,
            "source": v.source,
        } for a in audits for v in a.verdicts],
    }
    cols = ["Clr.", "Vag.", "Omi.", "No Pol."]
    st.report.add_table(Table(
        "disclosure_data_types", "Data type disclosures (skills per verdict)", ["Data type", *cols],
        [[k, *[c[b] for b in VERDICTS]] for k, c in table.items() if not k.startswith("entity:")],
    ))
    st.report.add_table(Table(
        "disclosure_endpoints", "Endpoint disclosures (skills per verdict)", ["Endpoint organization", *cols],
        [[k.split(":", 1)[1], *[c[b] for b in VERDICTS]] for k, c in table.items() if k.startswith("entity:")],
    ))

    if cfg.path("gold"):
        gold = load_gold(cfg.path("gold"))
        predicted = {}
        for g in gold:
            audit = audit_skill(g.tuple.skill_id, [g.tuple], policies, classifier, include_platform, platform_policy)
            predicted[g.tuple] = audit.verdicts[0].verdict
        confusion: dict = {}
        for g in gold:
            row = confusion.setdefault(g.verdict, {})
            row[predicted[g.tuple]] = row.get(predicted[g.tuple], 0) + 1
        vr = metrics_from_confusion(confusion)
        section["validation"] = {
            "n": len(gold),
            "micro": vars(vr.micro), "macro": vars(vr.macro), "macro_f1_of_means": vr.macro_f1_of_means,
            "confusion": vr.confusion,
        }
        st.report.add_table(Table("policy_validation", "Disclosure classifier vs gold labels",
                                  ["Averaging", "Precision", "Recall", "F1"], [
            ["micro", vr.micro.precision, vr.micro.recall, vr.micro.f1],
            ["macro", vr.macro.precision, vr.macro.recall, vr.macro.f1],
        ]))
    st.report.sections["policy"] = section


def stage_interests(st: AuditState) -> None:
    snaps = load_snapshots(_require(st.config, "interests", "interests"))
    timeline = diff_interests(snaps)
    st.report.sections["interests"] = {
        persona: [vars(step) for step in steps] for persona, steps in timeline.items()
    }
    rows = []
    for persona, steps in timeline.items():
        for step in steps:
            rows.append([persona, step.request_label, step.status, step.added, step.removed])
    st.report.add_table(Table("interests", "Inferred advertising interests across data requests",
                              ["Persona", "Request", "Status", "Added", "Removed"], rows))


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "resolve": stage_resolve,
    "classify": stage_classify,
    "syncs": stage_syncs,
    "bids": stage_bids,
    "policy": stage_policy,
    "interests": stage_interests,
}


def run_pipeline(config: AuditConfig, stages: str | Sequence[str] | None = None) -> AuditReport:
    """Run the selected stages (a prefix of STAGES) and return the report.

    Any failure is re-raised as StageError naming the stage.
    """
    names = parse_stages(stages)
    report = AuditReport(fingerprint=fingerprint(config), stages=names)
    report.sections["config"] = {k: v for k, v in config.data.items() if k != "paths"}
    state = AuditState(config, report)
    with collect_warnings() as messages:
        for name in names:
            try:
                STAGE_FUNCS[name](state)
            except AuditError as exc:
                raise StageError(name, exc) from exc
            except (ValueError, KeyError, OSError) as exc:
                raise StageError(name, InputError(str(exc))) from exc
    report.warnings = messages
    return report
