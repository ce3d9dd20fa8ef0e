"""Labeled ad records and the personalization rule.

Ad images and audio transcripts are labeled by hand upstream; this module only
holds the labels and decides which ads count as personalized.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence


@dataclass(frozen=True)
class InstalledSkill:
    skill_id: str
    vendor_org: str
    industry: str


@dataclass(frozen=True)
class LabeledAd:
    persona: str
    creative_id: str      # identifies the same creative across personas
    advertiser: str
    industry: str
    channel: str = "web"  # web | audio
    skill_id: str | None = None  # streaming skill an audio ad played on


def personalized_ads(ads: Sequence[LabeledAd], installed: Mapping[str, Iterable[InstalledSkill]],
                     platform_org: str = "Amazon") -> list[LabeledAd]:
    """Ads meeting all three criteria: the advertiser is the vendor of a skill
    installed for that persona (or the platform itself), the creative was shown
    to that persona only, and its industry matches an installed skill's."""
    personas_by_creative: dict[str, set[str]] = defaultdict(set)
    for ad in ads:
        personas_by_creative[ad.creative_id].add(ad.persona)

    out = []
    for ad in ads:
        skills = list(installed.get(ad.persona, ()))
        vendors = {s.vendor_org for s in skills} | {platform_org}
        industries = {s.industry for s in skills}
        if (ad.advertiser in vendors
                and personas_by_creative[ad.creative_id] == {ad.persona}
                and ad.industry in industries):
            out.append(ad)
    return out


def ad_share_by_skill(ads: Iterable[LabeledAd]) -> dict[str, dict[str, float]]:
    """Fraction of audio ads each persona received on each streaming skill."""
    counts: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    for ad in ads:
        if ad.channel == "audio" and ad.skill_id:
            counts[ad.skill_id][ad.persona] += 1
    out = {}
    for skill, per in sorted(counts.items()):
        total = sum(per.values())
        out[skill] = {p: n / total for p, n in sorted(per.items())}
    return out
