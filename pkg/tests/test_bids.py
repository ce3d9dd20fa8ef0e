import logging
import random

import pytest

from skillaudit.bids import (BidRecord, aggregate, common_slots, cross_group_comparison, label_bidders,
                             load_bids, partner_split, persona_comparison, write_bids)
from skillaudit.errors import InputError
from skillaudit.trace import PersonaId


def bid(persona, slot, cpm, bidder="b", site="s.com", iteration=1, kind="interest"):
    return BidRecord(PersonaId(persona, kind), iteration, site, slot, bidder, cpm)


def test_common_slot_kept_and_dropped():
    bids = [bid("A", "x", 1), bid("B", "x", 1), bid("A", "y", 1)]
    kept = common_slots(bids, ["A", "B"])
    assert {b.slot_id for b in kept} == {"x"}


def test_six_slots_four_common():
    bids = []
    for slot in "abcdef":
        for p in "PQR":
            if slot in "ef" and p == "R":
                continue
            bids.append(bid(p, slot, 1.0))
    kept = common_slots(bids, ["P", "Q", "R"])
    assert sorted({b.slot_id for b in kept}) == ["a", "b", "c", "d"]


def test_no_common_slots_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="skillaudit"):
        assert common_slots([bid("A", "x", 1), bid("B", "y", 1)], ["A", "B"]) == []
    assert "no ad slot" in caplog.text


def test_iteration_slot_key():
    bids = [bid("A", "x", 1, iteration=1), bid("B", "x", 1, iteration=2)]
    assert common_slots(bids, ["A", "B"], key="site+slot+iteration") == []
    with pytest.raises(InputError):
        common_slots(bids, ["A", "B"], key="slot")


def test_aggregate_single_and_even():
    agg = aggregate([bid("A", "x", 0.5)] + [bid("B", str(i), v) for i, v in enumerate([1, 2, 3, 4])])
    assert (agg["A"].median_cpm, agg["A"].mean_cpm) == (0.5, 0.5)
    assert (agg["B"].median_cpm, agg["B"].mean_cpm) == (2.5, 2.5)


def test_aggregate_empty_bucket_is_null():
    agg = aggregate([bid("A", "x", 1)], ["A", "Z"])
    assert agg["Z"].median_cpm is None and agg["Z"].n == 0


def test_load_bids_round_trip_and_errors(tmp_path):
    bids = [bid("A", "x", 0.25), bid("B", "x", 1.5, kind="vanilla")]
    p = tmp_path / "b.jsonl"
    write_bids(bids, p)
    assert load_bids(p) == bids
    p.write_text(p.read_text() + '{"persona": "A", "iteration": 0, "site": "s", "slot_id": "x", "bidder": "b", "cpm": 1}\n')
    with pytest.raises(InputError, match="line"):
        load_bids(p)


def test_negative_cpm_rejected(tmp_path):
    p = tmp_path / "b.jsonl"
    p.write_text('{"persona": "A", "iteration": 1, "site": "s", "slot_id": "x", "bidder": "b", "cpm": -1}\n')
    with pytest.raises(InputError):
        load_bids(p)


def _shifted(rng, personas, shift, n=30):
    bids = []
    for i in range(n):
        for p in personas:
            bids.append(bid(p, f"slot{i}", rng.lognormvariate(0, 0.5) + shift.get(p, 0.0)))
    return bids


def test_planted_shift_is_significant():
    rng = random.Random(11)
    bids = _shifted(rng, ["T", "C"], {"T": 0.8})
    (row,) = persona_comparison(bids, ["T"], "C")
    assert row.significant
    assert row.result.size_label in ("medium", "large")


def test_self_comparison():
    rng = random.Random(12)
    bids = _shifted(rng, ["C"], {})
    (row,) = persona_comparison(bids, ["C"], "C")
    assert row.result.effect_size_r == pytest.approx(0.0)
    assert not row.significant


def test_bonferroni_scales_p():
    rng = random.Random(13)
    bids = _shifted(rng, ["T1", "T2", "C"], {"T1": 0.3})
    plain = persona_comparison(bids, ["T1", "T2"], "C")
    adj = persona_comparison(bids, ["T1", "T2"], "C", bonferroni=True)
    assert adj[0].p_adjusted == pytest.approx(min(1.0, 2 * plain[0].p_adjusted))


def test_cross_group_identical_distributions():
    # every persona gets the same values per slot: no cell can be significant
    bids = [bid(p, f"s{i}", 0.1 * i) for i in range(25) for p in ("E1", "E2", "W1", "W2")]
    cells = cross_group_comparison(bids, ["E1", "E2"], ["W1", "W2"])
    assert all(c.p_two_sided > 0.05 for c in cells)


def test_cross_group_one_planted_shift():
    rng = random.Random(21)
    bids = []
    for i in range(30):
        base = rng.lognormvariate(0, 0.3)
        for p, jitter in (("E1", 0.01), ("E2", 0.02), ("W1", 0.03), ("W2", 0.04)):
            v = base + jitter + (3.0 if p == "E2" and i % 2 else 0.0) + (1.5 if p == "E2" else 0.0)
            bids.append(bid(p, f"s{i}", v))
    cells = cross_group_comparison(bids, ["E1", "E2"], ["W1"])
    assert [(c.a, c.b) for c in cells if c.significant] == [("E2", "W1")]


def test_cross_group_self_diagonal():
    rng = random.Random(22)
    bids = _shifted(rng, ["A", "B"], {"B": 0.5})
    cells = cross_group_comparison(bids, ["A", "B"], ["A", "B"])
    diag = [c for c in cells if c.a == c.b]
    assert all(c.result.effect_size_r == pytest.approx(0.0) for c in diag)


def test_label_bidders(caplog):
    bids = [bid("A", str(i), 1.0, bidder=b) for i, b in
            enumerate(["p1", "p2", "n1", "p1", "n2", "p3", "n1", "n3", "n4", "n5"])]
    with caplog.at_level(logging.WARNING, logger="skillaudit"):
        labeled = label_bidders(bids, {"p1", "p2", "p3"}, known_orgs={"p1", "p2", "p3", "n1", "n2", "n3", "n4"})
    assert sum(b.label == "partner" for b in labeled) == 4
    assert "n5" in caplog.text and "n1" not in caplog.text


def test_split_all_partner_rows_null():
    labeled = label_bidders([bid("A", "x", 1.0, bidder="p")], {"p"})
    (row,) = partner_split(labeled)
    assert row.non_partner.median_cpm is None and row.median_ratio is None


def test_split_ratio_three():
    bids = [bid("X", f"s{i}", v, bidder="p") for i, v in enumerate([0.3, 0.6, 0.9])]
    bids += [bid("X", f"t{i}", v, bidder="n") for i, v in enumerate([0.1, 0.2, 0.3])]
    (row,) = partner_split(label_bidders(bids, {"p"}))
    assert row.median_ratio == pytest.approx(3.0)
    assert row.mean_ratio == pytest.approx(3.0)


def test_split_empty_and_unlabeled():
    assert partner_split([]) == []
    with pytest.raises(ValueError):
        partner_split([bid("A", "x", 1)])


def test_demo_vanilla_row(demo_report):
    rows = {r[0]: r[1:] for r in demo_report.tables["bids_median_mean"].rows}
    assert [round(v, 3) for v in rows["Vanilla"]] == [0.030, 0.153]
