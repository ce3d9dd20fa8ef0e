"""Header-bidding bid exports: common-slot filtering and persona comparisons."""

from __future__ import annotations

import json
import logging
import math
import statistics
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InputError
from .stats import DEFAULT_EXACT_CUTOFF, StatResult, mann_whitney_one_sided
from .trace import PersonaId

log = logging.getLogger(__name__)

SLOT_KEYS = ("site+slot", "site+slot+iteration")
ALPHA = 0.05


@dataclass(frozen=True)
class BidRecord:
    persona: PersonaId
    iteration: int
    site: str
    slot_id: str
    bidder: str
    cpm: float
    currency: str = "USD"
    timestamp_ms: int = 0
    label: str | None = None  # partner | non_partner once labeled


def bid_from_dict(obj: dict) -> BidRecord:
    persona = obj["persona"]
    persona = PersonaId(persona) if isinstance(persona, str) else PersonaId(persona["name"], persona.get("kind", "interest"))
    cpm = float(obj["cpm"])
    if not math.isfinite(cpm) or cpm < 0:
        raise ValueError(f"cpm must be finite and non-negative, got {obj['cpm']!r}")
    iteration = obj["iteration"]
    if not isinstance(iteration, int) or iteration < 1:
        raise ValueError("iteration must be an integer >= 1")
    return BidRecord(
        persona=persona,
        iteration=iteration,
        site=str(obj["site"]).lower(),
        slot_id=str(obj["slot_id"]),
        bidder=str(obj["bidder"]),
        cpm=cpm,
        currency=str(obj.get("currency", "USD")),
        timestamp_ms=int(obj.get("timestamp_ms", 0)),
    )


def bid_to_dict(bid: BidRecord) -> dict:
    return {
        "persona": {"name": bid.persona.name, "kind": bid.persona.kind},
        "iteration": bid.iteration,
        "site": bid.site,
        "slot_id": bid.slot_id,
        "bidder": bid.bidder,
        "cpm": bid.cpm,
        "currency": bid.currency,
        "timestamp_ms": bid.timestamp_ms,
    }


def load_bids(path: str | Path) -> list[BidRecord]:
    """Read a JSONL bid export. Malformed lines and duplicate keys raise InputError."""
    try:
        lines = Path(path).read_text("utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read bids {path}: {exc}") from exc
    bids, seen, bad = [], set(), []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            bid = bid_from_dict(json.loads(line))
        except (ValueError, KeyError, TypeError) as exc:
            bad.append(f"{lineno} ({exc})")
            continue
        key = (bid.persona, bid.iteration, bid.site, bid.slot_id, bid.bidder, bid.timestamp_ms)
        if key in seen:
            bad.append(f"{lineno} (duplicate bid)")
            continue
        seen.add(key)
        bids.append(bid)
    if bad:
        raise InputError(f"{path}: bad bid lines: {', '.join(bad[:20])}")
    return bids


def write_bids(bids: Iterable[BidRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for bid in bids:
            fh.write(json.dumps(bid_to_dict(bid), sort_keys=True, separators=(",", ":")) + "\n")


def slot_key(bid: BidRecord, key: str = "site+slot") -> tuple:
    if key == "site+slot":
        return (bid.site, bid.slot_id)
    if key == "site+slot+iteration":
        return (bid.site, bid.slot_id, bid.iteration)
    raise InputError(f"slots.key must be one of {SLOT_KEYS}, not {key!r}")


def common_slots(bids: Sequence[BidRecord], personas: Iterable[PersonaId | str],
                 key: str = "site+slot") -> list[BidRecord]:
    """Keep bids on slots that received at least one bid under every persona."""
    wanted = {p.name if isinstance(p, PersonaId) else p for p in personas}
    seen: dict[tuple, set[str]] = defaultdict(set)
    for b in bids:
        if b.persona.name in wanted:
            seen[slot_key(b, key)].add(b.persona.name)
    keep = {k for k, names in seen.items() if names >= wanted}
    if not keep:
        log.warning("no ad slot is common to personas %s", sorted(wanted))
    return [b for b in bids if b.persona.name in wanted and slot_key(b, key) in keep]


@dataclass(frozen=True)
class Aggregate:
    n: int
    median_cpm: float | None
    mean_cpm: float | None


def summarize(values: Sequence[float]) -> Aggregate:
    if not values:
        return Aggregate(0, None, None)
    return Aggregate(len(values), statistics.median(values), statistics.fmean(values))


def cpms_by_persona(bids: Iterable[BidRecord]) -> dict[str, list[float]]:
    out: dict[str, list[float]] = defaultdict(list)
    for b in bids:
        out[b.persona.name].append(b.cpm)
    return out


def aggregate(bids: Sequence[BidRecord], personas: Iterable[str] | None = None) -> dict[str, Aggregate]:
    """Median (mean of the two middle values for even n) and mean CPM per persona."""
    groups = cpms_by_persona(bids)
    names = list(personas) if personas is not None else sorted(groups)
    return {name: summarize(groups.get(name, [])) for name in names}


@dataclass(frozen=True)
class ComparisonRow:
    treatment: str
    control: str
    result: StatResult
    p_adjusted: float
    significant: bool


def _adjust(p: float, m: int, bonferroni: bool) -> float:
    return min(1.0, p * m) if bonferroni else p


def persona_comparison(bids: Sequence[BidRecord], treatments: Sequence[str], control: str,
                       exact_cutoff: int = DEFAULT_EXACT_CUTOFF, bonferroni: bool = False,
                       slot_key_mode: str = "site+slot") -> list[ComparisonRow]:
    """One-sided Mann-Whitney of each treatment persona against the control,
    on the slots common to all of them. Significant means p < 0.05
    (Bonferroni-adjusted when enabled)."""
    pool = common_slots(bids, list(treatments) + [control], slot_key_mode)
    groups = cpms_by_persona(pool)
    ctrl = groups.get(control, [])
    rows = []
    for t in treatments:
        res = mann_whitney_one_sided(groups.get(t, []), ctrl, exact_cutoff)
        p_adj = _adjust(res.p_value, len(treatments), bonferroni)
        rows.append(ComparisonRow(t, control, res, p_adj, p_adj < ALPHA))
    return rows


@dataclass(frozen=True)
class CrossCell:
    a: str
    b: str
    result: StatResult       # one-sided: a greater than b
    p_two_sided: float
    significant: bool        # judged on the two-sided p-value


def cross_group_comparison(bids: Sequence[BidRecord], group_a: Sequence[str], group_b: Sequence[str],
                           exact_cutoff: int = DEFAULT_EXACT_CUTOFF, bonferroni: bool = False,
                           slot_key_mode: str = "site+slot") -> list[CrossCell]:
    """Pairwise tests between two persona groups (e.g. Echo vs web interests).

    Both one- and two-sided p-values are kept; significance uses the two-sided
    value because the null here is "similar", not "lower".
    """
    pool = common_slots(bids, list(dict.fromkeys([*group_a, *group_b])), slot_key_mode)
    groups = cpms_by_persona(pool)
    m = len(group_a) * len(group_b)
    cells = []
    for a in group_a:
        for b in group_b:
            res = mann_whitney_one_sided(groups.get(a, []), groups.get(b, []), exact_cutoff)
            p2 = _adjust(res.p_two_sided, m, bonferroni)
            cells.append(CrossCell(a, b, res, p2, p2 < ALPHA))
    return cells


def label_bidders(bids: Sequence[BidRecord], direct_partners: Iterable[str],
                  known_orgs: Iterable[str] | None = None) -> list[BidRecord]:
    """Tag each bid partner/non_partner by bidder membership in the partner set.

    Bidders absent from ``known_orgs`` (when given) are labeled non_partner and
    logged once each.
    """
    partners = set(direct_partners)
    known = set(known_orgs) if known_orgs is not None else None
    warned = set()
    out = []
    for b in bids:
        if known is not None and b.bidder not in known and b.bidder not in partners:
            if b.bidder not in warned:
                warned.add(b.bidder)
                log.warning("bidder %r not in the org ontology; labeled non_partner", b.bidder)
            label = "non_partner"
        else:
            label = "partner" if b.bidder in partners else "non_partner"
        out.append(replace(b, label=label))
    return out


@dataclass(frozen=True)
class SplitRow:
    persona: str
    partner: Aggregate
    non_partner: Aggregate

    @property
    def median_ratio(self) -> float | None:
        if self.partner.median_cpm is None or not self.non_partner.median_cpm:
            return None
        return self.partner.median_cpm / self.non_partner.median_cpm

    @property
    def mean_ratio(self) -> float | None:
        if self.partner.mean_cpm is None or not self.non_partner.mean_cpm:
            return None
        return self.partner.mean_cpm / self.non_partner.mean_cpm


def partner_split(labeled: Sequence[BidRecord]) -> list[SplitRow]:
    if any(b.label is None for b in labeled):
        raise ValueError("partner_split needs bids labeled by label_bidders")
    split: dict[str, dict[str, list[float]]] = defaultdict(lambda: {"partner": [], "non_partner": []})
    for b in labeled:
        split[b.persona.name][b.label].append(b.cpm)
    return [
        SplitRow(name, summarize(g["partner"]), summarize(g["non_partner"]))
        for name, g in sorted(split.items())
    ]
