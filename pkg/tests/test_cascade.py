import random

import pytest

from reportable_triage.backend.base import ClassifierScore, decide
from reportable_triage.backend.baseline import TrainHyper, BaselineBackend, train_baseline
from reportable_triage.cascade import (
    FinalLabel,
    TierConfig,
    TierMember,
    check_gating_soundness,
    dumps_outcome,
    or_combine,
    read_outcomes,
    run_tier,
    triage,
)
from reportable_triage.corpus import (
    PathologyReport,
    SynthSpec,
    T1Label,
    T2Label,
    Tier,
    synth_corpus,
)
from reportable_triage.errors import ConfigurationError, TierExecutionError, ValidationError
from reportable_triage.preprocess import PipelineVariant, assemble_input

A, B = PipelineVariant.A_SYNOPTIC_FIRST, PipelineVariant.B_DIAGNOSIS_FIRST
HIGH, LOW = ClassifierScore(0.9), ClassifierScore(0.1)


def dec(tier, positive, backend_id="b"):
    score = HIGH if positive else LOW
    return decide(score, 0.5, tier, backend_id)


# --- or_combine --------------------------------------------------------------

def test_or_combine_one_positive():
    assert or_combine([dec(Tier.T1, True), dec(Tier.T1, False)]) is T1Label.CANCER


def test_or_combine_none_positive():
    assert or_combine([dec(Tier.T1, False), dec(Tier.T1, False)]) is T1Label.NON_CANCER


def test_or_combine_both_positive():
    assert or_combine([dec(Tier.T2, True), dec(Tier.T2, True)]) is T2Label.REPORTABLE


def test_or_combine_rejects_mixed_tasks():
    with pytest.raises(ConfigurationError, match="mixed"):
        or_combine([dec(Tier.T1, True), dec(Tier.T2, True)])
    with pytest.raises(ConfigurationError):
        or_combine([])


# --- fake backends for orchestration tests -----------------------------------

class KeywordBackend:
    """Scores 0.9 when its keyword occurs in the input text, else 0.1."""

    def __init__(self, backend_id, keyword):
        self.backend_id = backend_id
        self.keyword = keyword
        self.calls = 0

    def score_batch(self, inputs):
        self.calls += 1
        return [ClassifierScore(0.9 if self.keyword in inp.text.split() else 0.1)
                for inp in inputs]


class FailingBackend:
    backend_id = "broken"

    def score_batch(self, inputs):
        raise ValidationError("backend exploded")


def report_from_raw(rid, raw):
    from reportable_triage.sectioner import default_synonym_table, parse_sections
    return PathologyReport(report_id=rid, diagnosis_year=2023, raw_text=raw,
                           sections=tuple(parse_sections(raw, default_synonym_table())))


def keyword_tier(task, keyword_a="carcinoma", keyword_b="carcinoma"):
    return TierConfig(task=task, members=(
        TierMember(backend=KeywordBackend("kw-a", keyword_a), variant=A),
        TierMember(backend=KeywordBackend("kw-b", keyword_b), variant=B),
    ))


# --- TierConfig validation ----------------------------------------------------

def test_tier_config_needs_two_distinct_variants():
    member = TierMember(backend=KeywordBackend("x", "k"), variant=A)
    with pytest.raises(ConfigurationError):
        TierConfig(task=Tier.T1, members=(member, member))


# --- run_tier ------------------------------------------------------------------

def test_run_tier_empty():
    assert run_tier([], keyword_tier(Tier.T1)) == []


def test_run_tier_signal_only_in_synoptic_fires_member_a():
    raw = "SYNOPTIC REPORT:\ncarcinoma present\nDIAGNOSIS:\nsee synoptic note\n"
    report = report_from_raw("R1", raw)
    # member A reads synoptic-first, member B reads diagnosis-first with a tight
    # budget so only its priority section is visible to it
    config = TierConfig(task=Tier.T1, members=(
        TierMember(backend=KeywordBackend("kw-a", "carcinoma"), variant=A, token_budget=2),
        TierMember(backend=KeywordBackend("kw-b", "carcinoma"), variant=B, token_budget=2),
    ))
    [result] = run_tier([report], config)
    by_id = {d.backend_id: d for d in result.member_decisions}
    assert by_id["kw-a"].is_positive
    assert not by_id["kw-b"].is_positive
    assert result.combined_label is T1Label.CANCER


def test_run_tier_identical_decisions_combined_equal():
    raw = "SYNOPTIC REPORT:\nbenign\nDIAGNOSIS:\nbenign\n"
    [result] = run_tier([report_from_raw("R1", raw)], keyword_tier(Tier.T1))
    assert not result.is_positive
    assert result.combined_label is T1Label.NON_CANCER


def test_run_tier_order_preserving_and_batched():
    reports = [
        report_from_raw(f"R{i}",
                        f"SYNOPTIC REPORT:\n{'carcinoma' if i % 3 == 0 else 'benign'}\n"
                        f"DIAGNOSIS:\n{'carcinoma' if i % 3 == 0 else 'benign'}\n")
        for i in range(10)
    ]
    results = run_tier(reports, keyword_tier(Tier.T1), batch_size=3)
    for i, res in enumerate(results):
        assert res.is_positive == (i % 3 == 0)


def test_run_tier_worker_count_does_not_change_results():
    reports = [
        report_from_raw(f"R{i}",
                        f"SYNOPTIC REPORT:\n{'carcinoma' if i % 2 else 'benign'}\n"
                        f"DIAGNOSIS:\nnote\n")
        for i in range(20)
    ]
    serial = run_tier(reports, keyword_tier(Tier.T1), batch_size=4, max_workers=1)
    threaded = run_tier(reports, keyword_tier(Tier.T1), batch_size=4, max_workers=4)
    assert [r.combined_label for r in serial] == [r.combined_label for r in threaded]


def test_run_tier_backend_failure_names_report_range():
    config = TierConfig(task=Tier.T1, members=(
        TierMember(backend=FailingBackend(), variant=A),
        TierMember(backend=KeywordBackend("kw-b", "x"), variant=B),
    ))
    reports = [report_from_raw(f"R{i}", "DIAGNOSIS:\nbenign\n") for i in range(4)]
    with pytest.raises(TierExecutionError) as exc:
        run_tier(reports, config, batch_size=2)
    assert "broken" in str(exc.value)
    assert "R0" in str(exc.value) and "R1" in str(exc.value)


# --- triage --------------------------------------------------------------------

def cancer_raw(reportable=True):
    t2_word = "staging" if reportable else "recurrent"
    return (f"SYNOPTIC REPORT:\ncarcinoma {t2_word}\n"
            f"DIAGNOSIS:\ncarcinoma {t2_word}\n")


BENIGN_RAW = "SYNOPTIC REPORT:\nbenign\nDIAGNOSIS:\nbenign\n"


def full_cascade():
    t1 = keyword_tier(Tier.T1, "carcinoma", "carcinoma")
    t2 = keyword_tier(Tier.T2, "staging", "staging")
    return t1, t2


def test_triage_gating_and_final_labels():
    reports = [
        report_from_raw("neg", BENIGN_RAW),
        report_from_raw("pos-rep", cancer_raw(reportable=True)),
        report_from_raw("pos-nonrep", cancer_raw(reportable=False)),
    ]
    t1, t2 = full_cascade()
    outcomes = triage(reports, t1, t2)
    assert [o.report_id for o in outcomes] == ["neg", "pos-rep", "pos-nonrep"]
    assert outcomes[0].final is FinalLabel.NON_CANCER
    assert outcomes[0].t2 is None
    assert outcomes[1].final is FinalLabel.CANCER_REPORTABLE
    assert outcomes[2].final is FinalLabel.CANCER_NON_REPORTABLE
    check_gating_soundness(outcomes)


def test_triage_t2_invocation_count_matches_t1_positives():
    rng = random.Random(6)
    reports = []
    n_pos = 0
    for i in range(100):
        if rng.random() < 0.3:
            reports.append(report_from_raw(f"R{i}", cancer_raw()))
            n_pos += 1
        else:
            reports.append(report_from_raw(f"R{i}", BENIGN_RAW))
    t1, t2 = full_cascade()
    outcomes = triage(reports, t1, t2)
    scored_t2 = sum(1 for o in outcomes if o.t2 is not None)
    assert scored_t2 == n_pos
    t1_pos = sum(1 for o in outcomes if o.t1.is_positive)
    assert t1_pos == n_pos


def test_triage_explicit_t2_scope():
    reports = [report_from_raw("neg", BENIGN_RAW),
               report_from_raw("pos", cancer_raw())]
    t1, t2 = full_cascade()
    outcomes = triage(reports, t1, t2, t2_report_ids={"neg", "pos"})
    assert outcomes[0].t2 is not None  # scored even though t1-negative
    assert outcomes[0].final is FinalLabel.NON_CANCER  # final keeps production semantics
    with pytest.raises(ValidationError):
        check_gating_soundness(outcomes)


def test_triage_rejects_swapped_tier_configs():
    t1, t2 = full_cascade()
    with pytest.raises(ConfigurationError):
        triage([], t2, t1)


# --- FN-subset property --------------------------------------------------------

def test_fn_subset_property_randomized():
    rng = random.Random(17)
    for _ in range(50):
        n = 200
        golds = [rng.random() < 0.4 for _ in range(n)]
        a = [rng.random() < 0.7 for _ in range(n)]   # member A says positive
        b = [rng.random() < 0.7 for _ in range(n)]
        combined = [
            or_combine([dec(Tier.T1, pa, "a"), dec(Tier.T1, pb, "b")]) is T1Label.CANCER
            for pa, pb in zip(a, b)
        ]
        miss_a = {i for i in range(n) if golds[i] and not a[i]}
        miss_b = {i for i in range(n) if golds[i] and not b[i]}
        miss_c = {i for i in range(n) if golds[i] and not combined[i]}
        assert miss_c == miss_a & miss_b
        assert len(miss_c) <= min(len(miss_a), len(miss_b))


def test_ensemble_recall_at_least_max_member_recall():
    rng = random.Random(23)
    n = 500
    golds = [rng.random() < 0.3 for _ in range(n)]
    a = [g and rng.random() < 0.9 or (not g and rng.random() < 0.1) for g in golds]
    b = [g and rng.random() < 0.8 or (not g and rng.random() < 0.2) for g in golds]
    pos = sum(golds)
    recall_a = sum(1 for g, p in zip(golds, a) if g and p) / pos
    recall_b = sum(1 for g, p in zip(golds, b) if g and p) / pos
    recall_or = sum(1 for g, pa, pb in zip(golds, a, b) if g and (pa or pb)) / pos
    assert recall_or >= max(recall_a, recall_b)


# --- serialization ------------------------------------------------------------

def test_outcome_round_trip(tmp_path):
    reports = [report_from_raw("pos", cancer_raw()), report_from_raw("neg", BENIGN_RAW)]
    t1, t2 = full_cascade()
    outcomes = triage(reports, t1, t2)
    path = tmp_path / "outcomes.jsonl"
    path.write_text("".join(dumps_outcome(o) + "\n" for o in outcomes), encoding="utf-8")
    loaded = read_outcomes(path)
    assert [o["report_id"] for o in loaded] == ["pos", "neg"]
    assert loaded[0]["final"] == "cancer_reportable"
    assert loaded[0]["t1"]["combined_by"] == "or"
    assert len(loaded[0]["t1"]["members"]) == 2
    assert loaded[1]["t2"] is None
    member = loaded[0]["t1"]["members"][0]
    assert set(member) == {"backend_id", "label", "probability", "threshold"}


def test_read_outcomes_validates(tmp_path):
    path = tmp_path / "o.jsonl"
    path.write_text('{"report_id": "R"}\n', encoding="utf-8")
    with pytest.raises(ValidationError, match="final"):
        read_outcomes(path)
    path.write_text("nope\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="line 1"):
        read_outcomes(path)


def test_end_to_end_with_trained_baselines_on_synth():
    corpus = synth_corpus(SynthSpec(n_reports=400, vocabulary_signal_strength=1.0), seed=77)
    hyper = TrainHyper(epochs=3, feature_dim=1 << 14)

    def pairs(variant, tier):
        out = []
        for rec in corpus:
            label = rec.label_for(tier)
            if label is None:
                continue
            inp = assemble_input(rec.report, variant, 256)
            out.append((inp, 1 if label == tier.positive else 0))
        return out

    def tier_config(tier):
        members = []
        for variant, name in ((A, "a"), (B, "b")):
            model = train_baseline(pairs(variant, tier), hyper, seed=5)
            members.append(TierMember(
                backend=BaselineBackend(model=model, backend_id=f"bl-{name}"),
                variant=variant, token_budget=256))
        return TierConfig(task=tier, members=tuple(members))

    outcomes = triage([r.report for r in corpus], tier_config(Tier.T1),
                      tier_config(Tier.T2))
    check_gating_soundness(outcomes)
    by_id = {o.report_id: o for o in outcomes}
    correct_t1 = sum(
        1 for rec in corpus
        if by_id[rec.report_id].t1.is_positive == (rec.t1_label is T1Label.CANCER)
    )
    assert correct_t1 / len(corpus) > 0.95
