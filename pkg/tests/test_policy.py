import csv
from collections import Counter

import pytest

from skillaudit.endpoints import EndpointClassifier, OrgOntology, parse_filter_text
from skillaudit.errors import InputError
from skillaudit.policy import (DataFlowTuple, DataOntology, DisclosureClassifier, Lexicon, PolicyDocument,
                               audit_skill, classify_disclosure, disclosure_table, extract_flows, load_gold,
                               load_policies, split_sentences, write_gold)
from skillaudit.trace import HttpEvent, resolve_domains, segment_sessions

from conftest import flow


@pytest.fixture(scope="module")
def classifier():
    return DisclosureClassifier(DataOntology.load(), OrgOntology.load())


@pytest.fixture(scope="module")
def policies(fixtures):
    return load_policies(fixtures / "policies")


def doc(text, skill="s"):
    return PolicyDocument.from_text(skill, text)


def _tuples(path):
    with open(path, newline="") as fh:
        return [DataFlowTuple(r["skill_id"], r["entity"], r["data_type"] or None) for r in csv.DictReader(fh)]


def test_sonos_sentence_is_clear():
    d = doc("The actual recording of your voice command is then sent to the voice partner you have "
            "authorized to receive such recording (for example, Amazon).")
    v = classify_disclosure(DataFlowTuple("sonos", "Amazon", "voice_recording"), d,
                            DataOntology.load(), OrgOntology.load())
    assert v.verdict == "clear"


def test_harmony_sentence_is_vague(classifier):
    d = doc("Circle products may send pseudonymous information to an analytics tool, including timestamps.")
    assert classifier.classify(DataFlowTuple("harmony", "Amazon"), d).verdict == "vague"


def test_charles_stanley_sentence_is_vague(classifier):
    d = doc("We may share your personal information with external service providers who help us better serve you.")
    v = classifier.classify(DataFlowTuple("charles_stanley_radio", "Triton Digital, Inc."), d)
    assert (v.verdict, v.matched_term) == ("vague", "external service providers")


def test_no_policy(classifier):
    assert classifier.classify(DataFlowTuple("x", "Amazon"), None).verdict == "no_policy"


def test_alias_is_clear(classifier):
    d = doc("We share listening data with Triton.")
    assert classifier.classify(DataFlowTuple("s", "Triton Digital, Inc."), d).verdict == "clear"


def test_negated_statement_is_not_a_disclosure(classifier):
    d = doc("We do not share information with Chartable. We never sell data to Amazon.")
    assert classifier.classify(DataFlowTuple("s", "Chartable Holding Inc"), d).verdict == "omitted"
    assert classifier.classify(DataFlowTuple("s", "Amazon"), d).verdict == "omitted"


def test_contraction_negation(classifier):
    d = doc("We don't share your data with Chartable.")
    assert classifier.classify(DataFlowTuple("s", "Chartable Holding Inc"), d).verdict == "omitted"


def test_ancestor_term_is_vague(classifier):
    d = doc("We collect audio recordings when you speak.")
    assert classifier.classify(DataFlowTuple("s", "Amazon", "voice_recording"), d).verdict == "vague"


def test_ignored_generic_term_does_not_count(classifier):
    d = doc("We collect personal information.")
    assert classifier.classify(DataFlowTuple("s", "Amazon", "voice_recording"), d).verdict == "omitted"


def test_clear_beats_earlier_vague(classifier):
    d = doc("We share data with partners. We also send data to Amazon.")
    v = classifier.classify(DataFlowTuple("s", "Amazon"), d)
    assert v.verdict == "clear" and "Amazon" in v.evidence_sentence


def test_unknown_data_type(classifier):
    with pytest.raises(InputError):
        classifier.classify(DataFlowTuple("s", "Amazon", "shoe_size"), doc("We collect data."))


def test_sentence_split_keeps_abbreviations():
    text = "We work with Amazon.com, Inc. and others. Data is sent e.g. to partners. Done."
    parts = split_sentences(text, Lexicon.load().abbreviations)
    assert parts == ["We work with Amazon.com, Inc. and others.", "Data is sent e.g. to partners.", "Done."]
    assert " ".join(parts) == text


def test_no_policy_skill_three_tuples(classifier):
    tuples = [DataFlowTuple("k", "Amazon"), DataFlowTuple("k", "Amazon", "language"),
              DataFlowTuple("k", "Spotify AB")]
    audit = audit_skill("k", tuples, {}, classifier)
    assert [v.verdict for v in audit.verdicts] == ["no_policy"] * 3
    assert audit.summary["no_policy"] == 3


def test_platform_policy_upgrades_omitted(classifier):
    skill = {"k": doc("We care about you.", "k")}
    platform = doc("Amazon may use your time zone settings.")
    t = [DataFlowTuple("k", "Amazon", "timezone")]
    assert audit_skill("k", t, skill, classifier).verdicts[0].verdict == "omitted"
    v = audit_skill("k", t, skill, classifier, True, platform).verdicts[0]
    assert (v.verdict, v.source) == ("clear", "platform")


def test_platform_omitted_keeps_no_policy(classifier):
    platform = doc("Amazon stores recordings.")
    v = audit_skill("k", [DataFlowTuple("k", "Spotify AB")], {}, classifier, True, platform).verdicts[0]
    assert v.verdict == "no_policy"


def test_ten_skill_fixture_matches_hand_labels(fixtures, classifier, policies):
    tuples = _tuples(fixtures / "tuples.csv")
    gold = {g.tuple: g.verdict for g in load_gold(fixtures / "gold.csv")}
    skills = sorted({t.skill_id for t in tuples})
    assert len(skills) == 10
    counts = Counter()
    for skill in skills:
        audit = audit_skill(skill, tuples, policies, classifier)
        for v in audit.verdicts:
            assert v.verdict == gold[v.tuple], v.tuple
        counts.update(audit.summary)
    assert counts == Counter(gold.values())


def test_disclosure_table_shape(fixtures, classifier, policies):
    tuples = _tuples(fixtures / "tuples.csv")
    audits = [audit_skill(s, tuples, policies, classifier) for s in sorted({t.skill_id for t in tuples})]
    table = disclosure_table(audits)
    assert table["customer_user_id"] == {"clear": 1, "vague": 0, "omitted": 1, "no_policy": 1}
    assert table["entity:Amazon"] == {"clear": 1, "vague": 3, "omitted": 2, "no_policy": 1}


def test_gold_round_trip(tmp_path, fixtures):
    gold = load_gold(fixtures / "gold.csv")
    out = tmp_path / "g.csv"
    write_gold(gold, out)
    assert load_gold(out) == gold


def test_gold_bad_verdict(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("skill_id,data_type,entity,verdict\ns,,Amazon,maybe\n")
    with pytest.raises(InputError, match=":2:"):
        load_gold(p)


def _verdicts(flows, rules=""):
    sessions = segment_sessions(flows)
    clf = EndpointClassifier(OrgOntology.load(), parse_filter_text(rules))
    return sessions, clf.classify(sessions, resolve_domains(sessions))


def test_audio_payload_to_amazon():
    body = "RIFF....WAVEfmt "
    f = flow(protocol="http", skill="sonos",
             http=HttpEvent("POST", "http://avs-alexa-na.amazon.com/v20160207/events", body_excerpt=body))
    sessions, verdicts = _verdicts([f])
    tuples = extract_flows(sessions, verdicts, unencrypted=True)
    assert DataFlowTuple("sonos", "Amazon", "voice_recording") in tuples


def test_encrypted_session_gives_entity_only():
    sessions, verdicts = _verdicts([flow(sni="dts.podtrac.com", skill="pod")])
    assert extract_flows(sessions, verdicts, unencrypted=True) == [DataFlowTuple("pod", "Podtrac Inc")]


def test_planted_user_id_key():
    body = '{"customerId": "A1B2C3", "event": "open"}'
    f = flow(protocol="http", skill="harmony",
             http=HttpEvent("POST", "http://avs-alexa-na.amazon.com/e", body_excerpt=body))
    sessions, verdicts = _verdicts([f])
    assert extract_flows(sessions, verdicts, unencrypted=True) == [
        DataFlowTuple("harmony", "Amazon"), DataFlowTuple("harmony", "Amazon", "customer_user_id")]


def test_payloads_ignored_without_unencrypted_flag():
    f = flow(protocol="http", skill="harmony",
             http=HttpEvent("POST", "http://avs-alexa-na.amazon.com/e?userId=abc"))
    sessions, verdicts = _verdicts([f])
    assert extract_flows(sessions, verdicts) == [DataFlowTuple("harmony", "Amazon")]
