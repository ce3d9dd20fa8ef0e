"""Acceptance criteria 1-8. Each test prints one PASS/FAIL line before asserting."""

import itertools
import random
import time
from collections import deque

import pytest

from skillaudit.config import AuditConfig
from skillaudit.demo import generate_demo, plant_syncs
from skillaudit.domains import registered_domain
from skillaudit.endpoints import FilterRule, FilterRuleSet, OrgOntology
from skillaudit.metrics import metrics_from_confusion
from skillaudit.pipeline import run_pipeline
from skillaudit.policy import DataFlowTuple, DataOntology, classify_disclosure, load_policies
from skillaudit.report import canonical_json
from skillaudit.stats import mann_whitney_one_sided, size_label
from skillaudit.syncs import detect_syncs, extract_identifiers, partner_sets
from skillaudit.trace import ingest_trace


@pytest.fixture
def verdict(capsys):
    def _report(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return _report


def test_criterion_1_policy_examples(fixtures, verdict):
    policies = load_policies(fixtures / "policies")
    data, orgs = DataOntology.load(), OrgOntology.load()
    cases = [
        (DataFlowTuple("sonos", "Amazon", "voice_recording"), "clear"),
        (DataFlowTuple("harmony", "Amazon"), "vague"),
        (DataFlowTuple("charles_stanley_radio", "Triton Digital, Inc."), "vague"),
        (DataFlowTuple("dog_trainer", "Amazon"), "no_policy"),
    ]
    got = [classify_disclosure(t, policies.get(t.skill_id), data, orgs).verdict for t, _ in cases]
    hits = sum(g == want for g, (_, want) in zip(got, cases))
    verdict(1, hits == 4, f"{hits}/4 worked examples reproduced ({got})")


def _brute_force_p(u, n1, n2):
    n = n1 + n2
    total = hits = 0
    for combo in itertools.combinations(range(1, n + 1), n1):
        total += 1
        hits += sum(combo) - n1 * (n1 + 1) / 2 >= u
    return hits / total


def test_criterion_2_statistics(verdict):
    start = time.perf_counter()
    worst_exact = 0.0
    cases = 0
    for n1 in range(1, 7):
        for n2 in range(1, 7):
            n = n1 + n2
            oracle = {}
            for combo in itertools.combinations(range(1, n + 1), n1):
                rest = [v for v in range(1, n + 1) if v not in combo]
                res = mann_whitney_one_sided(list(combo), rest, method="exact")
                u = res.u_statistic
                if u not in oracle:
                    oracle[u] = _brute_force_p(u, n1, n2)
                worst_exact = max(worst_exact, abs(res.p_value - oracle[u]))
                cases += 1
    rng = random.Random(2026)
    worst_normal = 0.0
    bad_r = 0
    for _ in range(1000):
        vals = rng.sample(range(10 ** 6), 40)
        a, b = vals[:20], vals[20:]
        exact = mann_whitney_one_sided(a, b, method="exact")
        normal = mann_whitney_one_sided(a, b, method="normal")
        worst_normal = max(worst_normal, abs(exact.p_value - normal.p_value))
        swapped = mann_whitney_one_sided(b, a)
        if not (-1 <= exact.effect_size_r <= 1) or abs(exact.effect_size_r + swapped.effect_size_r) > 1e-12:
            bad_r += 1
    elapsed = time.perf_counter() - start
    ok = worst_exact < 1e-12 and worst_normal <= 0.01 and bad_r == 0 and elapsed < 10
    verdict(2, ok, f"{cases} exhaustive cases max|dp|={worst_exact:.1e}; n=20 max|dp|={worst_normal:.4f}; "
                   f"r violations={bad_r}; {elapsed:.2f}s")


def test_criterion_3_effect_size_boundaries(verdict):
    expected = {0.1099: "negligible", 0.11: "small", 0.2799: "small", 0.28: "medium",
                0.4299: "medium", 0.43: "large"}
    got = {r: size_label(r) for r in expected}
    verdict(3, got == expected, f"labels {list(got.values())}")


def test_criterion_4_demo_tables(demo_report, verdict):
    dist = {r[0]: r[1:] for r in demo_report.tables["table2_distribution"].rows}
    bids = {r[0]: r[1:] for r in demo_report.tables["bids_median_mean"].rows}
    sig = demo_report.tables["bids_significance"].rows
    n_sig = sum(1 for r in sig if r[1] < 0.05 and 0.28 <= abs(r[2]) < 0.43)
    vanilla = tuple(round(v, 3) for v in bids["Vanilla"])
    ok = (dist["Amazon"][0] == 88.93 and dist["Total"][1] == 9.4 and vanilla == (0.030, 0.153)
          and len(sig) == 9 and n_sig == 6)
    verdict(4, ok, f"platform-functional={dist['Amazon'][0]}% total ATS={dist['Total'][1]}% "
                   f"Vanilla={vanilla} medium&significant={n_sig}/{len(sig)}")


def _bfs_partners(edges, focus):
    adj = {}
    for s, r in edges:
        adj.setdefault(s, set()).add(r)
        adj.setdefault(r, set()).add(s)
    dist = {focus: 0}
    queue = deque([focus])
    while queue:
        node = queue.popleft()
        for nxt in adj.get(node, ()):
            if nxt not in dist:
                dist[nxt] = dist[node] + 1
                queue.append(nxt)
    return ({o for o, d in dist.items() if d == 1}, {o for o, d in dist.items() if d == 2})


def test_criterion_5_sync_detection(verdict):
    focus = "hubads.com"
    direct = [f"dsp{i}.com" for i in range(7)]
    far = [f"ssp{i}.net" for i in range(18)]
    edges = [(d, focus) for d in direct[:5]] + [(focus, d) for d in direct[5:]]
    edges += [(direct[i % len(direct)], o) for i, o in enumerate(far)]
    assert len(edges) == 25
    plan = plant_syncs(edges, n_decoys=50, n_noise=200, seed=5)
    tokens = extract_identifiers(plan.flows, registered_domain)
    events = detect_syncs(tokens, plan.flows, registered_domain)
    found = {(e.token.value, e.sender_org, e.receiver_org) for e in events}
    tp = len(found & plan.events)
    precision = tp / len(found) if found else 0.0
    recall = tp / len(plan.events)
    ps = partner_sets(events, focus)
    want = _bfs_partners(edges, focus)
    got = (len(ps.direct_partners), len(ps.second_hop))
    ok = precision == recall == 1.0 and got == (len(want[0]), len(want[1]))
    verdict(5, ok, f"precision={precision:.3f} recall={recall:.3f} (direct, second-hop)={got} "
                   f"expected={(len(want[0]), len(want[1]))}")


def _random_label(rng):
    return "".join(rng.choice("abcxyz-0") for _ in range(rng.randint(1, 4))).strip("-") or "a"


def test_criterion_6_filter_semantics(verdict):
    rng = random.Random(6)
    violations = matches = 0
    for _ in range(10_000):
        host_labels = [_random_label(rng) for _ in range(rng.randint(1, 5))]
        mode = rng.random()
        if mode < 0.4:  # label-aligned suffix of the host
            rule_labels = host_labels[rng.randrange(len(host_labels)):]
        elif mode < 0.7:  # character-level suffix that may cut a label
            joined = ".".join(host_labels)
            rule_labels = joined[rng.randrange(len(joined)):].strip(".").split(".")
        else:
            rule_labels = [_random_label(rng) for _ in range(rng.randint(1, 3))]
        rule_labels = [lab for lab in rule_labels if lab] or ["a"]
        host, pattern = ".".join(host_labels), ".".join(rule_labels)
        scope = rng.choice(["exact_host", "domain_and_subdomains"])
        got = FilterRuleSet([FilterRule(pattern, scope)]).matches(host)
        if scope == "exact_host":
            want = host_labels == rule_labels
        else:
            want = host_labels[-len(rule_labels):] == rule_labels and len(rule_labels) <= len(host_labels)
        matches += got
        violations += got != want
    verdict(6, violations == 0, f"10000 pairs, {matches} matches, {violations} violations")


HAND = {
    "clear":     {"clear": 8, "vague": 2, "omitted": 0, "no_policy": 0},
    "vague":     {"clear": 1, "vague": 5, "omitted": 3, "no_policy": 1},
    "omitted":   {"clear": 0, "vague": 2, "omitted": 6, "no_policy": 0},
    "no_policy": {"clear": 0, "vague": 0, "omitted": 1, "no_policy": 4},
}
# per class P = 8/9, 5/9, 6/10, 4/5; R = 8/10, 5/10, 6/8, 4/5
HAND_MACRO = (0.7111, 0.7125, 0.7088)


def test_criterion_7_validation_metrics(verdict):
    rng = random.Random(7)
    classes = ["clear", "vague", "omitted", "no_policy"]
    bad = 0
    for _ in range(100):
        m = {g: {p: rng.randint(0, 20) for p in classes} for g in classes}
        rep = metrics_from_confusion(m)
        bad += abs(rep.micro.precision - rep.micro.recall) > 1e-12
    rep = metrics_from_confusion(HAND)
    macro = (round(rep.macro.precision, 4), round(rep.macro.recall, 4), round(rep.macro.f1, 4))
    verdict(7, bad == 0 and macro == HAND_MACRO,
            f"micro P=R on {100 - bad}/100 matrices; hand matrix macro P/R/F1={macro}")


def test_criterion_8_determinism_and_scale(tmp_path_factory, verdict):
    config = generate_demo(tmp_path_factory.mktemp("scale10"), scale=10)
    cfg = AuditConfig.load(config)
    n_records = sum(len(ingest_trace(p)) for p in cfg.paths("traces") + cfg.paths("avs_traces"))
    outputs, times = [], []
    for _ in range(2):
        start = time.perf_counter()
        outputs.append(canonical_json(run_pipeline(AuditConfig.load(config)).to_json()).encode())
        times.append(time.perf_counter() - start)
    ok = n_records >= 100_000 and max(times) < 10 and outputs[0] == outputs[1]
    verdict(8, ok, f"{n_records} records; audit runs {times[0]:.2f}s / {times[1]:.2f}s; "
                   f"identical JSON={outputs[0] == outputs[1]}")
