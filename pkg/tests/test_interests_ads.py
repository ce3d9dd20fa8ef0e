import json

import pytest

from skillaudit.ads import InstalledSkill, LabeledAd, ad_share_by_skill, personalized_ads
from skillaudit.errors import InputError
from skillaudit.interests import InterestSnapshot, diff_interests, load_snapshots


def snap(label, interests, present=True, persona="Health & Fitness"):
    return InterestSnapshot(persona, label, frozenset(interests), present)


def test_removal_between_requests():
    tl = diff_interests([snap("post_install", {"Electronics", "DIY & Tools"}),
                         snap("post_interact_1", {"DIY & Tools"})])
    step = tl["Health & Fitness"][1]
    assert step.removed == ["Electronics"] and step.added == []


def test_identical_snapshots():
    tl = diff_interests([snap("post_install", {"A"}), snap("post_interact_1", {"A"})])
    assert tl["Health & Fitness"][1].added == tl["Health & Fitness"][1].removed == []


def test_missing_file_reports_no_removals():
    tl = diff_interests([snap("post_install", {"A"}), snap("post_interact_1", set(), present=False),
                         snap("post_interact_2", {"A", "B"})])
    steps = tl["Health & Fitness"]
    assert (steps[1].status, steps[1].removed) == ("missing", [])
    assert steps[2].added == ["B"] and steps[2].removed == []


def test_missing_snapshot_cannot_carry_interests():
    with pytest.raises(ValueError):
        snap("post_install", {"A"}, present=False)


def test_load_snapshots_uses_persona_field(tmp_path):
    d = tmp_path / "health-fitness"
    d.mkdir()
    (d / "post_install.json").write_text(json.dumps({"persona": "Health & Fitness", "interests": ["A"]}))
    snaps = load_snapshots(tmp_path)
    assert {s.persona for s in snaps} == {"Health & Fitness"}
    assert [s.file_present for s in snaps] == [True, False, False]


def test_load_snapshots_conflicting_names(tmp_path):
    d = tmp_path / "p"
    d.mkdir()
    (d / "post_install.json").write_text('{"persona": "A", "interests": []}')
    (d / "post_interact_1.json").write_text('{"persona": "B", "interests": []}')
    with pytest.raises(InputError):
        load_snapshots(tmp_path)


def test_demo_interest_rows(demo_report):
    rows = [r for r in demo_report.tables["interests"].rows if r[0] == "Health & Fitness"]
    assert rows[1][4] == ["Electronics"]
    assert rows[2][2] == "missing"


def test_personalized_ads_rule():
    installed = {"Smart Home": [InstalledSkill("sonos", "Sonos", "Electronics")]}
    ads = [
        LabeledAd("Smart Home", "c1", "Sonos", "Electronics"),      # all three criteria
        LabeledAd("Smart Home", "c2", "Sonos", "Electronics"),      # shown to another persona too
        LabeledAd("Vanilla", "c2", "Sonos", "Electronics"),
        LabeledAd("Smart Home", "c3", "Acme", "Electronics"),       # advertiser is not a vendor
        LabeledAd("Smart Home", "c4", "Amazon", "Electronics"),     # platform counts as vendor
        LabeledAd("Smart Home", "c5", "Sonos", "Fashion"),          # industry mismatch
    ]
    assert [a.creative_id for a in personalized_ads(ads, installed)] == ["c1", "c4"]


def test_ad_share_by_skill():
    ads = [LabeledAd("A", "1", "x", "i", "audio", "radio"), LabeledAd("A", "2", "x", "i", "audio", "radio"),
           LabeledAd("B", "3", "x", "i", "audio", "radio"), LabeledAd("B", "4", "x", "i", "web")]
    share = ad_share_by_skill(ads)
    assert share["radio"]["A"] == pytest.approx(2 / 3)
