"""Deterministic demo dataset shaped like a small smart-speaker audit.

Everything is synthesized from fixed plans and a seeded RNG, so the same
``(scale, seed)`` always writes byte-identical files. ``scale`` multiplies the
number of Echo capture iterations; the traffic shares do not depend on it.
"""

from __future__ import annotations

import json
import random
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist

from .bids import BidRecord, write_bids
from .trace import DnsQuery, FlowRecord, HttpEvent, PersonaId, write_trace

BASE_TS = 1_640_995_200_000  # 2022-01-01T00:00:00Z
RESOLVER_IP = "192.168.1.1"

# --------------------------------------------------------------------------- plan

# persona -> skills; the first nine are interest personas
ECHO_PERSONAS = {
    "Connected Car": ["garmin", "car_facts", "drive_time_radio"],
    "Dating": ["dating_relationship_tips", "love_quotes", "date_night_ideas"],
    "Fashion & Style": ["makeup_of_the_day", "mens_finest_daily_fashion_tip", "fashion_news_daily"],
    "Pets & Animals": ["dog_trainer", "cat_facts", "pet_podcast"],
    "Religion & Spirituality": ["youversion_bible", "charles_stanley_radio", "daily_prayer"],
    "Smart Home": ["sonos", "harmony", "smart_plug_helper"],
    "Wine & Beverages": ["wine_pairing", "cocktail_recipes", "beer_trivia"],
    "Health & Fitness": ["seven_minute_workout", "meditation_timer", "step_counter"],
    "Navigation & Trip Planners": ["flight_tracker", "traffic_update", "trip_planner"],
}
CONTROL = "Vanilla"
WEB_PERSONAS = ["Health", "Science", "Computers"]

AMAZON_FUNCTIONAL = (
    [f"{p}.amazon.com" for p in ("api", "avs-alexa-na", "bob-dispatch-prod-na", "dcape-na", "det-ta-g7g",
                                 "dp-gw-na", "fls-na", "mads", "msh", "spectrum", "todo-ta-g7g")]
    + ["prod.amcs-tachyon.com", "api.amazonalexa.com"]
    + [f"d{n}.cloudfront.net" for n in ("1ge6ya", "2m6k8r", "3p5x1c", "3rlqa3", "8ez3cp", "9ngmjy", "zl8u2y")]
    + [f"{p}.amazonaws.com" for p in ("s3", "kinesis.us-east-1", "firehose.us-east-1", "cognito-identity.us-east-1")]
    + ["acsechocaptiveportal.com", "ingestion.us-east-1.prod.arteries.alexa.a2z.com",
       "ffs-provisioner-config.amazon-dss.com"]
)
AMAZON_ATS = ["device-metrics-us-2.amazon.com", "fireoscaptiveportal.com"]

# skill -> third-party advertising/tracking hosts it contacts
SKILL_ATS = {
    "garmin": ["chtbl.com", "dts.podtrac.com", "turnernetworksales.mc.tritondigital.com",
               "playerservices.streamtheworld.com"],
    "car_facts": ["dcs.megaphone.fm", "traffic.megaphone.fm"],
    "drive_time_radio": ["traffic.libsyn.com"],
    "pet_podcast": ["play.podtrac.com", "dcs.megaphone.fm", "traffic.megaphone.fm"],
    "charles_stanley_radio": ["live.streamtheworld.com", "stream.streamtheworld.com"],
    "daily_prayer": ["traffic.libsyn.com"],
    "dating_relationship_tips": ["play.podtrac.com", "dcs.megaphone.fm", "traffic.megaphone.fm"],
    "love_quotes": ["chtbl.com", "hwcdn.libsyn.com"],
    "makeup_of_the_day": ["dcs.megaphone.fm", "traffic.megaphone.fm", "play.podtrac.com", "chtbl.com"],
    "mens_finest_daily_fashion_tip": ["play.podtrac.com", "dcs.megaphone.fm", "traffic.megaphone.fm"],
    "fashion_news_daily": ["dts.podtrac.com", "traffic.libsyn.com", "hwcdn.libsyn.com", "traffic.omny.fm",
                           "live.streamtheworld.com"],
}
# skill -> third-party functional hosts
_FUNCTIONAL_POOL = [
    "dillilabs.com", "cdn2.voiceapps.com", "one.pod.npr.org", "1432239411.rsc.cdn77.org",
    "discovery.meethue.com", "two.pod.npr.org", "content.dillilabs.com", "static.voiceapps.com",
    "www.npr.org", "api.meethue.com", "cdn3.voiceapps.com",
]
SKILL_FUNCTIONAL = {
    "makeup_of_the_day": ["one.pod.npr.org", "1432239411.rsc.cdn77.org"],
    "fashion_news_daily": ["dillilabs.com", "cdn2.voiceapps.com"],
    "dog_trainer": _FUNCTIONAL_POOL[:4],
    "cat_facts": _FUNCTIONAL_POOL[4:8],
    "pet_podcast": _FUNCTIONAL_POOL[8:],
    "youversion_bible": _FUNCTIONAL_POOL[:3],
    "charles_stanley_radio": _FUNCTIONAL_POOL[3:6],
    "daily_prayer": _FUNCTIONAL_POOL[6:8],
    "date_night_ideas": ["cdn2.voiceapps.com"],
    "step_counter": ["discovery.meethue.com"],
}
SKILL_VENDOR = {
    "garmin": [("static.garmincdn.com", 7)],
    "youversion_bible": [("api.youversionapi.com", 5), ("nodejs.youversionapi.com", 5)],
}
SKILL_CATALOG = {
    "garmin": {"vendor_domains": ["garmincdn.com"]},
    "youversion_bible": {"vendor_domains": ["youversionapi.com"]},
}

# flow totals per capture iteration; platform functional 8893 and ATS 791+149 of 10,000
AMAZON_FUNCTIONAL_FLOWS = 8893
AMAZON_ATS_FLOWS = 791
THIRD_PARTY_ATS_FLOWS = 149
THIRD_PARTY_FUNCTIONAL_FLOWS = 150
UNRESOLVED_PER_SESSION = 3

FILTER_LIST = """\
# demo blocklist: hosts-style entries block one host, bare domains block subdomains too
0.0.0.0 device-metrics-us-2.amazon.com
fireoscaptiveportal.com
chtbl.com
omny.fm
podtrac.com
megaphone.fm
libsyn.com
streamtheworld.com
tritondigital.com
"""

POLICIES = {
    "sonos": (
        "Sonos respects your privacy. When you use voice control, the recording of your voice command is "
        "sent to the voice partner you have authorized to receive it, for example Amazon. "
        "We do not sell your personal information."
    ),
    "harmony": (
        "This policy covers the Harmony skill. Our remote products may send pseudonymous information to an "
        "analytics tool, such as timestamps and error reports. You can opt out in the app."
    ),
    "charles_stanley_radio": (
        "We respect the privacy of our listeners. We may also share your personal information with external "
        "service providers who help us serve you better."
    ),
    "garmin": (
        "Garmin International collects the skill identifier and your user id when you link your account. "
        "We share listening statistics with advertising partners."
    ),
    "youversion_bible": (
        "YouVersion collects usage data to improve the Bible App. We never sell your data to advertisers."
    ),
    "makeup_of_the_day": (
        "We care about your privacy. We do not share information with Chartable."
    ),
}
PLATFORM_POLICY = (
    "Amazon processes and retains your voice recordings to provide and improve Alexa. "
    "Amazon may use your customer id, language and time zone settings to personalize the service."
)
GOLD = [
    ("sonos", "voice_recording", "Amazon", "clear"),
    ("sonos", "", "Amazon", "clear"),
    ("harmony", "", "Amazon", "vague"),
    ("harmony", "customer_user_id", "Amazon", "omitted"),
    ("charles_stanley_radio", "", "Triton Digital, Inc.", "vague"),
    ("charles_stanley_radio", "", "Amazon", "omitted"),
    ("garmin", "", "Garmin International", "clear"),
    ("garmin", "", "Chartable Holding Inc", "vague"),
    ("garmin", "skill_id", "Amazon", "clear"),
    ("youversion_bible", "", "Life Covenant Church, Inc.", "clear"),
    ("makeup_of_the_day", "", "Chartable Holding Inc", "omitted"),
    ("makeup_of_the_day", "", "Spotify AB", "vague"),
    ("dog_trainer", "", "Amazon", "no_policy"),
]
INTERESTS = {
    "Health & Fitness": {
        "post_install": ["Electronics", "Home & Garden: DIY & Tools"],
        "post_interact_1": ["Home & Garden: DIY & Tools"],
        "post_interact_2": None,
    },
    "Fashion & Style": {
        "post_install": [],
        "post_interact_1": ["Beauty & Personal Care", "Fashion", "Video Entertainment"],
        "post_interact_2": ["Fashion", "Video Entertainment"],
    },
    "Smart Home": {
        "post_install": [],
        "post_interact_1": ["Electronics", "Home & Garden: DIY & Tools", "Home & Garden: Home & Kitchen"],
        "post_interact_2": ["Home & Garden: DIY & Tools", "Home & Garden: Home & Kitchen", "Pet Supplies"],
    },
    "Connected Car": {"post_install": [], "post_interact_1": [], "post_interact_2": None},
}

# rank-biserial targets for each interest persona vs the control (order of ECHO_PERSONAS)
EFFECT_TARGETS = [0.354, 0.363, 0.319, 0.428, 0.356, 0.210, 0.192, 0.139, 0.410]
WEB_EFFECT_TARGETS = [0.33, 0.30, 0.36]
COMMON_SLOTS = 40
CONTROL_MEDIAN_PAIR = (0.0295, 0.0305)
CONTROL_SUM = 6.12  # mean 0.153 over 40 slots

# cookie-sync plan around the platform
INBOUND_PARTNERS = 41
SECOND_HOP_ORGS = 247
PLATFORM_SYNC_HOST = "s.amazon-adsystem.com"


def slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def split_evenly(total: int, parts: int) -> list[int]:
    base, rem = divmod(total, parts)
    return [base + (1 if i < rem else 0) for i in range(parts)]


def host_ips(hosts: list[str]) -> dict[str, str]:
    """One stable public-looking address per host."""
    return {h: f"52.{20 + i // 250}.{i % 250 + 1}.{10 + i % 7}" for i, h in enumerate(sorted(set(hosts)))}


# --------------------------------------------------------------------------- echo traffic


def _session_contacts() -> list[tuple[str, str, list[tuple[str, int]]]]:
    """(persona, skill, [(host, flows)]) for one capture iteration."""
    sessions = [(p, s) for p, skills in ECHO_PERSONAS.items() for s in skills]
    n = len(sessions)
    amazon_f = split_evenly(AMAZON_FUNCTIONAL_FLOWS, n)
    amazon_a = split_evenly(AMAZON_ATS_FLOWS, n)

    ats_contacts = [(s, h) for _, s in sessions for h in SKILL_ATS.get(s, [])]
    fun_contacts = [(s, h) for _, s in sessions for h in SKILL_FUNCTIONAL.get(s, [])]
    ats_counts = dict(zip(ats_contacts, split_evenly(THIRD_PARTY_ATS_FLOWS, len(ats_contacts))))
    fun_counts = dict(zip(fun_contacts, split_evenly(THIRD_PARTY_FUNCTIONAL_FLOWS, len(fun_contacts))))

    out = []
    for i, (persona, skill) in enumerate(sessions):
        contacts: list[tuple[str, int]] = []
        per_host = split_evenly(amazon_f[i], len(AMAZON_FUNCTIONAL))
        rot = i % len(AMAZON_FUNCTIONAL)
        hosts = AMAZON_FUNCTIONAL[rot:] + AMAZON_FUNCTIONAL[:rot]
        contacts += [(h, c) for h, c in zip(hosts, per_host) if c]
        fireos = amazon_a[i] // 6
        contacts += [(AMAZON_ATS[0], amazon_a[i] - fireos), (AMAZON_ATS[1], fireos)]
        contacts += SKILL_VENDOR.get(skill, [])
        contacts += [(h, ats_counts[(skill, h)]) for h in SKILL_ATS.get(skill, [])]
        contacts += [(h, fun_counts[(skill, h)]) for h in SKILL_FUNCTIONAL.get(skill, [])]
        out.append((persona, skill, [(h, c) for h, c in contacts if c]))
    return out


def _echo_flows(scale: int, rng: random.Random) -> list[FlowRecord]:
    plan = _session_contacts()
    all_hosts = [h for _, _, cs in plan for h, _ in cs]
    ips = host_ips(all_hosts)
    flows: list[FlowRecord] = []
    for it in range(scale):
        for k, (persona_name, skill, contacts) in enumerate(plan):
            persona = PersonaId(persona_name, "interest")
            sid = f"echo-{slug(persona_name)}-{skill}-{it + 1:03d}"
            start = BASE_TS + it * 86_400_000 + k * 1_000_000
            # interleave hosts so every phase sees a mix
            seq = []
            for h, c in contacts:
                seq += [h] * c
            rng.shuffle(seq)
            seq_unres = [None] * UNRESOLVED_PER_SESSION
            seq = seq[: len(seq) // 2] + seq_unres + seq[len(seq) // 2:]
            total = len(seq)

            def rec(ts, phase, **kw):
                return FlowRecord(sid, persona, skill, phase, ts, "outbound", **kw)

            # resolver answers for every host of the session, before any traffic
            for j, h in enumerate(sorted({h for h in seq if h})):
                flows.append(rec(start + j, "install", dst_ip=RESOLVER_IP, dst_port=53, protocol="dns",
                                 byte_count=80, dns_query=DnsQuery(h, (ips[h],))))
            t0 = start + 1_000
            for j, host in enumerate(seq):
                phase = "install" if j < total // 5 else ("interact" if j < total * 4 // 5 else "idle")
                ts = t0 + j * 40
                nbytes = rng.randint(300, 40_000)
                if host is None:
                    flows.append(rec(ts, phase, dst_ip=f"203.0.113.{(k + j) % 250 + 1}", dst_port=443,
                                     protocol="tls", byte_count=nbytes))
                elif j % 10 == 0:
                    # no SNI: attributed through the earlier DNS answer
                    flows.append(rec(ts, phase, dst_ip=ips[host], dst_port=443, protocol="tls", byte_count=nbytes))
                elif j % 10 == 1:
                    flows.append(rec(ts, phase, dst_ip=ips[host], dst_port=80, protocol="http", byte_count=nbytes,
                                     http=HttpEvent("GET", f"http://{host}/v1/{skill}/{j}")))
                else:
                    flows.append(rec(ts, phase, dst_ip=ips[host], dst_port=443, protocol="tls",
                                     byte_count=nbytes, sni=host))
    return flows


# --------------------------------------------------------------------------- cookie syncing


def random_token(rng: random.Random, length: int = 16) -> str:
    alphabet = string.ascii_letters + string.digits
    while True:
        tok = "".join(rng.choice(alphabet) for _ in range(length))
        if any(c.isdigit() for c in tok) and any(c.isalpha() for c in tok):
            return tok


@dataclass
class SyncPlan:
    """Planted cookie-sync ground truth and the crawl flows carrying it."""

    flows: list[FlowRecord]
    events: set[tuple[str, str, str]]       # (token, sender org, receiver org)
    edges: set[tuple[str, str]] = field(default_factory=set)


def plant_syncs(edges: list[tuple[str, str]], n_decoys: int, n_noise: int, seed: int = 0,
                personas: list[PersonaId] | None = None, hosts: dict[str, str] | None = None,
                start_ts: int = BASE_TS + 500 * 86_400_000) -> SyncPlan:
    """Crawl traffic with one sync chain per (sender org, receiver org) edge.

    Each chain mints a fresh token in a Set-Cookie from the sender, then the
    token rides in a query parameter of a later request to the receiver.
    Decoys pass a token between two hosts of the same org; noise parameters
    carry low-entropy values or one-off identifiers that never reappear.
    Org names double as registered domains unless ``hosts`` maps them to a
    sync hostname.
    """
    rng = random.Random(seed)
    personas = personas or [PersonaId(CONTROL, "vanilla")]
    hosts = hosts or {}
    flows: list[FlowRecord] = []
    events: set[tuple[str, str, str]] = set()
    ts = start_ts

    def host_of(org: str, sub: str = "sync") -> str:
        return hosts.get(org, f"{sub}.{org}")

    def add(sid, persona, url, set_cookies=(), referer=None):
        nonlocal ts
        ts += 7
        flows.append(FlowRecord(sid, persona, None, "crawl", ts, "outbound", "198.51.100.7", 443, "http",
                                byte_count=512, http=HttpEvent("GET", url, (), tuple(set_cookies), referer)))

    for n, (sender, receiver) in enumerate(edges):
        persona = personas[n % len(personas)]
        sid = f"crawl-{slug(persona.name)}-{n:04d}"
        tok = random_token(rng)
        src = f"https://{host_of(sender)}/pixel?cb={rng.randint(10000, 99999)}"
        add(sid, persona, src, [("uid", tok)])
        add(sid, persona, f"https://{host_of(receiver)}/match?pid={tok}&src={sender}", referer=src)
        events.add((tok, sender, receiver))

    orgs = sorted({o for e in edges for o in e})
    for n in range(n_decoys):
        org = orgs[n % len(orgs)]
        persona = personas[n % len(personas)]
        sid = f"crawl-decoy-{n:04d}"
        tok = random_token(rng)
        add(sid, persona, f"https://{host_of(org)}/init", [("session", tok)])
        add(sid, persona, f"https://{host_of(org, 'cdn')}/asset.js?sid={tok}")

    shapes = [
        lambda: f"{rng.randint(100, 1999)}x{rng.randint(50, 999)}",
        lambda: rng.choice(["en-US", "de_DE", "fr", "pt-BR", "ja-JP"]),
        lambda: str(1_640_000_000 + rng.randint(0, 10 ** 8)),
        lambda: str(rng.randint(0, 99999)),
        lambda: rng.choice(["banner", "leaderboard", "sidebar-top", "footer"]),
        lambda: random_token(rng, 20),  # unique identifier that is never shared
    ]
    for n in range(n_noise):
        org = orgs[rng.randrange(len(orgs))]
        persona = personas[n % len(personas)]
        value = shapes[n % len(shapes)]()
        add(f"crawl-noise-{n:04d}", persona, f"https://{host_of(org, 'ads')}/imp?p{n % 7}={value}")
    return SyncPlan(flows, events, set(edges))


def _platform_sync_plan(seed: int) -> tuple[SyncPlan, list[str], list[str]]:
    partners = [f"partner{i:02d}-ads.com" for i in range(1, INBOUND_PARTNERS + 1)]
    second = [f"thirdparty{j:03d}.net" for j in range(1, SECOND_HOP_ORGS + 1)]
    edges = [(p, "Amazon") for p in partners]
    edges += [(partners[j % len(partners)], o) for j, o in enumerate(second)]
    personas = [PersonaId(p, "interest") for p in ECHO_PERSONAS] + [PersonaId(CONTROL, "vanilla")]
    plan = plant_syncs(edges, n_decoys=60, n_noise=240, seed=seed + 17, personas=personas,
                       hosts={"Amazon": PLATFORM_SYNC_HOST})
    return plan, partners, second


# --------------------------------------------------------------------------- bids


def control_cpms(n: int = COMMON_SLOTS) -> list[float]:
    """Skewed control bids: lognormal quantiles pinned to the target median and sum."""
    nd = NormalDist(0.0, 1.6)
    vals = [round(0.03 * pow(2.718281828459045, nd.inv_cdf((i + 0.5) / n)), 6) for i in range(n)]
    lo, hi = CONTROL_MEDIAN_PAIR
    vals[n // 2 - 1], vals[n // 2] = lo, hi
    vals[-1] = round(CONTROL_SUM - sum(vals[:-1]), 6)
    if not vals[-1] > vals[-2]:
        raise ValueError("control plan cannot reach the target sum")
    return vals


def treatment_cpms(control: list[float], r: float, rng: random.Random) -> list[float]:
    """Values whose Mann-Whitney U against ``control`` is round((r + 1) * n1 * n2 / 2).

    A value strictly between the k-th and (k+1)-th smallest control values beats
    exactly k of them, so U is the sum of the chosen gap indices.
    """
    c = sorted(control)
    n2, n1 = len(c), COMMON_SLOTS
    target = round((r + 1) * n1 * n2 / 2)
    # gaps cluster around the mean so few values land above the control's long tail
    top = n2 - 1
    gaps = [min(top, max(0, round(rng.gauss(target / n1, 9)))) for _ in range(n1)]
    while sum(gaps) != target:
        i = rng.randrange(n1)
        if sum(gaps) < target and gaps[i] < top:
            gaps[i] += 1
        elif sum(gaps) > target and gaps[i] > 0:
            gaps[i] -= 1
    # values sharing a gap are spread evenly inside it, so none collide
    share = {k: gaps.count(k) for k in set(gaps)}
    used: dict[int, int] = {}
    out = []
    for k in gaps:
        used[k] = used.get(k, 0) + 1
        u = (used[k] - 0.5 + rng.uniform(-0.2, 0.2)) / share[k]
        if k == 0:
            v = c[0] * u
        elif k == n2:
            v = c[-1] * (1 + u)
        else:
            v = c[k - 1] + (c[k] - c[k - 1]) * u
        out.append(round(v, 6))
    if len(set(out) | set(c)) != len(out) + len(c):
        raise ValueError("tie in planted bids; change the seed")
    return out


def _bids(seed: int, partners: list[str], non_partners: list[str]) -> list[BidRecord]:
    rng = random.Random(seed + 29)
    slots = [(f"publisher{i % 10 + 1:02d}.com", f"slot-{i // 10 + 1}") for i in range(COMMON_SLOTS)]
    ctrl = control_cpms()
    plans: list[tuple[PersonaId, list[float]]] = []
    for name, r in zip(ECHO_PERSONAS, EFFECT_TARGETS):
        plans.append((PersonaId(name, "interest"), treatment_cpms(ctrl, r, rng)))
    plans.append((PersonaId(CONTROL, "vanilla"), list(ctrl)))
    for name, r in zip(WEB_PERSONAS, WEB_EFFECT_TARGETS):
        plans.append((PersonaId(name, "web_control"), treatment_cpms(ctrl, r, rng)))

    out = []
    for pi, (persona, values) in enumerate(plans):
        order = sorted(range(len(values)), key=lambda i: values[i])
        rank = {i: n for n, i in enumerate(order)}
        slot_order = list(range(len(slots)))
        rng.shuffle(slot_order)
        for j, (slot_idx, value) in enumerate(zip(slot_order, values)):
            # higher bids lean towards the platform's sync partners
            partner = rng.random() < 0.25 + 0.5 * rank[j] / len(values)
            bidder = rng.choice(partners) if partner else rng.choice(non_partners)
            site, slot = slots[slot_idx]
            out.append(BidRecord(persona, 1 + j % 5, site, slot, bidder, value,
                                 timestamp_ms=BASE_TS + pi * 3_600_000 + j * 1000))
        # slots only this persona saw; must not leak into comparisons
        for d in range(5):
            out.append(BidRecord(persona, 1, f"only-{slug(persona.name)}.com", f"slot-x{d}",
                                 rng.choice(non_partners), round(5 + rng.random(), 6),
                                 timestamp_ms=BASE_TS + pi * 3_600_000 + 100_000 + d))
    return out


# --------------------------------------------------------------------------- unencrypted captures


def _avs_flows() -> list[FlowRecord]:
    """Plain-text captures of a few skills talking to the voice service."""
    plans = {
        "sonos": [('RIFF....WAVEfmt audio frames', "audio/wav")],
        "harmony": [('{"customerId":"A1B2C3D4E5","event":"open"}', "application/json")],
        "garmin": [('{"skillId":"amzn1.ask.skill.9f1c","userId":"amzn1.ask.account.77"}', "application/json")],
        "charles_stanley_radio": [('{"header":{"namespace":"AudioPlayer","name":"PlaybackStarted"}}',
                                   "application/json"),
                                  ('{"locale":"en-US","timezone":"America/New_York"}', "application/json")],
    }
    flows = []
    persona = PersonaId("AVS", "interest")
    for k, (skill, bodies) in enumerate(sorted(plans.items())):
        sid = f"avs-{skill}"
        for j, (body, ctype) in enumerate(bodies):
            url = "http://avs-alexa-na.amazon.com/v20160207/events"
            flows.append(FlowRecord(sid, persona, skill, "interact", BASE_TS + k * 60_000 + j * 100, "outbound",
                                    "52.94.233.10", 80, "http", byte_count=len(body),
                                    http=HttpEvent("POST", url, (("content-type", ctype),), (), None, body)))
    return flows


# --------------------------------------------------------------------------- writer


def generate_demo(out_dir: str | Path, scale: int = 1, seed: int = 7) -> Path:
    """Write the demo dataset and its config.json; returns the config path."""
    if scale < 1:
        raise ValueError("scale must be >= 1")
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)

    write_trace(_echo_flows(scale, rng), out / "traces" / "echo.jsonl")
    plan, partners, second = _platform_sync_plan(seed)
    write_trace(plan.flows, out / "traces" / "crawl.jsonl")
    write_trace(_avs_flows(), out / "avs.jsonl")
    write_bids(_bids(seed, partners, second[:60]), out / "bids.jsonl")

    (out / "filter_list.txt").write_text(FILTER_LIST, encoding="utf-8")
    (out / "skills.json").write_text(json.dumps(SKILL_CATALOG, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    pol = out / "policies"
    pol.mkdir(exist_ok=True)
    for skill, text in POLICIES.items():
        (pol / f"{skill}.txt").write_text(text + "\n", encoding="utf-8")
    (out / "platform_policy.txt").write_text(PLATFORM_POLICY + "\n", encoding="utf-8")
    with open(out / "gold.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("skill_id,data_type,entity,verdict\n")
        for row in GOLD:
            fh.write(",".join(f'"{v}"' if "," in v else v for v in row) + "\n")
    for persona, steps in INTERESTS.items():
        d = out / "interests" / slug(persona)
        d.mkdir(parents=True, exist_ok=True)
        for label, interests in steps.items():
            if interests is not None:
                (d / f"{label}.json").write_text(
                    json.dumps({"persona": persona, "interests": interests}, indent=2) + "\n", encoding="utf-8")

    config = {
        "paths": {
            "traces": ["traces/echo.jsonl", "traces/crawl.jsonl"],
            "avs_traces": ["avs.jsonl"],
            "bids": "bids.jsonl",
            "policies": "policies",
            "platform_policy": "platform_policy.txt",
            "filter_lists": ["filter_list.txt"],
            "skills": "skills.json",
            "gold": "gold.csv",
            "interests": "interests",
        },
        "bids": {"control": CONTROL},
    }
    path = out / "config.json"
    path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
