"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and timings.

Criterion 2 checks that recomputing F1 from the externally reported
two-decimal (recall, precision) pairs reproduces every reported F1 after
half-up rounding. One reported row ("model-x non-cancer": recall 0.97,
precision 1.00, F1 0.99) is arithmetically inconsistent: f1(0.97, 1.00) =
0.9848, which rounds to 0.98 under any standard rounding, and an identical
(recall, precision) pair elsewhere in the same table is reported as 0.98.
That row cannot pass, the check is implemented faithfully anyway, and the
failure is expected and documented.
"""

import json
import math
import random
import time

import pytest

from cli_util import write_config
from mock_server import MockClassifyServer
from oracles import naive_counts, naive_eval

from reportable_triage.backend.base import ClassifierScore, decide
from reportable_triage.backend.baseline import (
    hash_token_features,
    regularized_gradient,
    regularized_loss,
)
from reportable_triage.backend.remote import remote_score
from reportable_triage.cascade import or_combine
from reportable_triage.cli import main
from reportable_triage.corpus import (
    SynthSpec,
    T1Label,
    Tier,
    synth_corpus,
    write_corpus,
)
from reportable_triage.errors import RemoteProtocolError, ScoreRangeError
from reportable_triage.metrics import ConfusionMatrix, class_metrics, eval_report
from reportable_triage.sectioner import default_synonym_table, parse_sections, reassemble
from reportable_triage.util import round_half_up

import numpy as np


def report_line(number: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {number} [{name}]: {status}{suffix}")


# --- criterion 1: OR-ensemble FN-subset property -------------------------------

def test_criterion_1_fn_subset_property():
    rng = random.Random(1401)
    t0 = time.monotonic()
    score_pos, score_neg = ClassifierScore(0.9), ClassifierScore(0.1)
    for _ in range(1000):
        n = 500
        golds = [rng.getrandbits(1) == 1 for _ in range(n)]
        preds_a = [rng.getrandbits(1) == 1 for _ in range(n)]
        preds_b = [rng.getrandbits(1) == 1 for _ in range(n)]
        miss_a, miss_b, miss_ens = set(), set(), set()
        for i in range(n):
            da = decide(score_pos if preds_a[i] else score_neg, 0.5, Tier.T1, "a")
            db = decide(score_pos if preds_b[i] else score_neg, 0.5, Tier.T1, "b")
            combined_positive = or_combine([da, db]) is T1Label.CANCER
            if golds[i]:
                if not preds_a[i]:
                    miss_a.add(i)
                if not preds_b[i]:
                    miss_b.add(i)
                if not combined_positive:
                    miss_ens.add(i)
        assert miss_ens == miss_a & miss_b
        assert len(miss_ens) <= min(len(miss_a), len(miss_b))
    elapsed = time.monotonic() - t0
    ok = elapsed < 5.0
    report_line(1, "or-ensemble fn-subset", ok, f"1000 trials in {elapsed:.2f}s")
    assert ok, f"runtime {elapsed:.2f}s exceeds the 5s budget"


# --- criterion 2: reported-table arithmetic ------------------------------------

# (tier, model, class, recall, precision, reported F1), as printed in the
# external reference tables at two decimals
REPORTED_ROWS = [
    ("t1", "model-g", "non cancer", 0.97, 1.00, 0.98),
    ("t1", "model-g", "cancer", 0.99, 0.89, 0.94),
    ("t1", "model-x", "non cancer", 0.97, 1.00, 0.99),
    ("t1", "model-x", "cancer", 0.99, 0.91, 0.95),
    ("t1", "combined", "non cancer", 0.96, 1.00, 0.98),
    ("t1", "combined", "cancer", 0.99, 0.88, 0.93),
    ("t2", "model-g", "non reportable", 0.99, 0.94, 0.96),
    ("t2", "model-g", "reportable", 0.98, 1.00, 0.99),
    ("t2", "model-x", "non reportable", 0.99, 0.95, 0.97),
    ("t2", "model-x", "reportable", 0.99, 1.00, 0.99),
    ("t2", "combined", "non reportable", 0.98, 0.96, 0.97),
    ("t2", "combined", "reportable", 0.99, 0.99, 0.99),
]


def cm_for_pair(recall: float, precision: float) -> ConfusionMatrix:
    """Integer counts whose precision/recall equal the two-decimal pair exactly."""
    r = round(recall * 100)
    p = round(precision * 100)
    return ConfusionMatrix(tp=p * r, fp=r * (100 - p), tn=0, fn=p * (100 - r))


def test_criterion_2_table_consistency_arithmetic():
    mismatches = []
    for tier, model, cls, recall, precision, reported_f1 in REPORTED_ROWS:
        cm = cm_for_pair(recall, precision)
        m = class_metrics(cm)
        assert math.isclose(m.recall, recall, abs_tol=1e-12)
        assert math.isclose(m.precision, precision, abs_tol=1e-12)
        computed = round_half_up(m.f1, 2)
        if computed != reported_f1:
            mismatches.append(
                f"{tier} {model} ({cls}): f1({recall:.2f}, {precision:.2f}) = "
                f"{m.f1:.6f} -> {computed:.2f}, reported {reported_f1:.2f}"
            )
    ok = not mismatches
    report_line(2, "table-consistency arithmetic", ok,
                f"{12 - len(mismatches)}/12 rows consistent"
                + ("; " + "; ".join(mismatches) if mismatches else ""))
    assert ok, (
        "reported rows whose F1 cannot be reproduced from their own "
        "(recall, precision) pair: " + "; ".join(mismatches)
    )


# --- criterion 3: undersampling exactness at the default ratios -----------------

def run_build(config, out_dir, tier):
    assert main(["--config", str(config), "--out-dir", str(out_dir),
                 "build-dataset", "--tier", tier]) == 0
    return (out_dir / tier / "manifest.json").read_bytes()


def test_criterion_3_undersampling_exactness(tmp_path):
    t0 = time.monotonic()
    t1_corpus = synth_corpus(
        SynthSpec(n_reports=10400, cancer_fraction=0.21,
                  vocabulary_signal_strength=0.9), seed=301)
    write_corpus(t1_corpus, tmp_path / "t1_corpus.jsonl")
    t2_corpus = synth_corpus(
        SynthSpec(n_reports=2200, cancer_fraction=1.0,
                  reportable_fraction_within_cancer=0.8,
                  vocabulary_signal_strength=0.9), seed=302)
    write_corpus(t2_corpus, tmp_path / "t2_corpus.jsonl")

    cfg_t1 = write_config(tmp_path, corpus="t1_corpus.jsonl", name="cfg_t1.json")
    cfg_t2 = write_config(tmp_path, corpus="t2_corpus.jsonl", name="cfg_t2.json")

    t1_manifests = [run_build(cfg_t1, tmp_path / f"run_t1_{i}", "t1") for i in range(3)]
    t2_manifests = [run_build(cfg_t2, tmp_path / f"run_t2_{i}", "t2") for i in range(3)]
    assert t1_manifests[0] == t1_manifests[1] == t1_manifests[2]
    assert t2_manifests[0] == t2_manifests[1] == t2_manifests[2]

    m1 = json.loads(t1_manifests[0])
    train_cancer = m1["counts"]["train_before_undersample"]["cancer"]
    assert train_cancer == 1747  # round-half-up of 0.8 * 2184
    assert m1["counts"]["train"]["non_cancer"] == math.floor(0.8 * train_cancer) == 1397
    assert m1["counts"]["train"]["cancer"] == train_cancer

    m2 = json.loads(t2_manifests[0])
    train_nonrep = m2["counts"]["train_before_undersample"]["non_reportable"]
    assert train_nonrep == 352  # 0.8 * 440
    assert m2["counts"]["train"]["reportable"] == math.floor(1.2 * train_nonrep) == 422
    assert m2["counts"]["train"]["non_reportable"] == train_nonrep

    elapsed = time.monotonic() - t0
    ok = elapsed < 10.0
    report_line(3, "undersampling exactness", ok,
                f"t1: floor(0.8*{train_cancer})=1397 non-cancers kept; "
                f"t2: floor(1.2*{train_nonrep})=422 reportables kept; "
                f"3 byte-identical reruns in {elapsed:.2f}s")
    assert ok, f"runtime {elapsed:.2f}s exceeds the 10s budget"


# --- criterion 4: metric oracle equivalence --------------------------------------

def test_criterion_4_metric_oracle_equivalence():
    rng = random.Random(1404)
    pos, neg = T1Label.CANCER, T1Label.NON_CANCER
    worst = 0.0
    for _ in range(200):
        n = 1000
        preds = [pos if rng.getrandbits(1) else neg for _ in range(n)]
        golds = [pos if rng.getrandbits(1) else neg for _ in range(n)]
        report = eval_report(preds, golds, Tier.T1)
        expected = naive_eval(preds, golds, pos, neg)
        for label in (pos, neg):
            got = report.metrics_for(label)
            want = expected["per_class"][label]
            for name in ("recall", "precision", "specificity", "f1", "accuracy"):
                g, w = getattr(got, name), want[name]
                assert (g is None) == (w is None), (label, name)
                if g is not None:
                    diff = abs(g - w)
                    worst = max(worst, diff)
                    assert diff <= 1e-12, (label, name, diff)
        assert abs(report.micro_f1 - expected["micro_f1"]) <= 1e-12
        assert abs(report.macro_f1 - expected["macro_f1"]) <= 1e-12
        assert report.missed_positive_count == expected["missed_positive_count"]
        tp, fp, tn, fn = naive_counts(preds, golds, pos)
        assert report.micro_f1 == (tp + tn) / n  # micro-F1 == accuracy, exactly
    report_line(4, "metric oracle equivalence", True,
                f"200 vectors, max |diff| = {worst:.2e}")


# --- criterion 5: baseline gradient check ----------------------------------------

def test_criterion_5_gradient_check():
    rng = np.random.default_rng(1405)
    dim = 1 << 10
    vocab = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"]
    texts = [" ".join(rng.choice(vocab, size=int(rng.integers(3, 9))))
             for _ in range(10)]
    features = [hash_token_features(t.split(), dim) for t in texts]
    labels = [int(rng.integers(0, 2)) for _ in range(10)]
    if len(set(labels)) == 1:
        labels[0] = 1 - labels[0]
    weights = rng.normal(scale=0.4, size=dim)
    bias = -0.2
    l2 = 1e-3

    grad_w, grad_b = regularized_gradient(weights, bias, features, labels, l2)
    active = sorted({i for f in features for i in f})
    coords = list(rng.choice(active, size=min(16, len(active)), replace=False))
    h = 1e-6
    worst = 0.0
    for i in coords:
        w_hi, w_lo = weights.copy(), weights.copy()
        w_hi[i] += h
        w_lo[i] -= h
        fd = (regularized_loss(w_hi, bias, features, labels, l2)
              - regularized_loss(w_lo, bias, features, labels, l2)) / (2 * h)
        rel = abs(grad_w[i] - fd) / max(abs(fd), abs(grad_w[i]), 1e-8)
        worst = max(worst, rel)
        assert rel < 1e-5, (int(i), rel)
    fd_b = (regularized_loss(weights, bias + h, features, labels, l2)
            - regularized_loss(weights, bias - h, features, labels, l2)) / (2 * h)
    rel_b = abs(grad_b - fd_b) / max(abs(fd_b), abs(grad_b), 1e-8)
    assert rel_b < 1e-5
    report_line(5, "baseline gradient check", True,
                f"{len(coords)} coords + bias, max rel err {max(worst, rel_b):.2e}")


# --- criteria 6 and 7: end-to-end run and gating soundness -----------------------

@pytest.fixture(scope="module")
def end_to_end(tmp_path_factory):
    base = tmp_path_factory.mktemp("accept_e2e")
    t0 = time.monotonic()
    assert main(["synth", "--n", "5000", "--signal", "1.0", "--seed", "1406",
                 "--out", str(base / "corpus.jsonl")]) == 0
    config = write_config(base, epochs=5)
    for tier in ("t1", "t2"):
        assert main(["--config", str(config), "build-dataset", "--tier", tier]) == 0
        for variant in ("a", "b"):
            assert main(["--config", str(config), "train-baseline",
                         "--tier", tier, "--variant", variant]) == 0

    t1_test = base / "out/t1/test.jsonl"
    t2_test = base / "out/t2/test.jsonl"
    outcomes_t1 = base / "out/outcomes_t1.jsonl"
    outcomes_t2 = base / "out/outcomes_t2_goldscope.jsonl"
    assert main(["--config", str(config), "triage", "--corpus", str(t1_test),
                 "--out", str(outcomes_t1), "--t2-scope", "predicted"]) == 0
    assert main(["--config", str(config), "triage", "--corpus", str(t2_test),
                 "--out", str(outcomes_t2), "--t2-scope", "gold"]) == 0

    eval_dir = base / "out/eval"
    assert main(["evaluate", "--outcomes", str(outcomes_t1), "--gold", str(t1_test),
                 "--tier", "t1", "--gating", "predicted", "--out", str(eval_dir)]) == 0
    assert main(["evaluate", "--outcomes", str(outcomes_t2), "--gold", str(t2_test),
                 "--tier", "t2", "--gating", "gold", "--out", str(eval_dir)]) == 0
    elapsed = time.monotonic() - t0
    return {"base": base, "eval_dir": eval_dir, "outcomes_t1": outcomes_t1,
            "elapsed": elapsed}


def test_criterion_6_end_to_end_recall(end_to_end):
    t1_doc = json.loads((end_to_end["eval_dir"] / "eval_t1.json").read_text())
    t2_doc = json.loads((end_to_end["eval_dir"] / "eval_t2.json").read_text())
    t1_recall = next(m for m in t1_doc["models"] if m["model"] == "combined")[
        "per_class"]["cancer"]["recall"]
    t2_recall = next(m for m in t2_doc["models"] if m["model"] == "combined")[
        "per_class"]["reportable"]["recall"]
    elapsed = end_to_end["elapsed"]
    ok = t1_recall >= 0.98 and t2_recall >= 0.98 and elapsed < 120.0
    report_line(6, "end-to-end desk-scale run", ok,
                f"t1 recall {t1_recall:.4f}, t2 recall {t2_recall:.4f}, "
                f"{elapsed:.1f}s")
    assert t1_recall >= 0.98
    assert t2_recall >= 0.98
    assert elapsed < 120.0


def test_criterion_7_gating_soundness(end_to_end):
    violations = 0
    scanned = 0
    with open(end_to_end["outcomes_t1"], encoding="utf-8") as fh:
        for line in fh:
            outcome = json.loads(line)
            scanned += 1
            t1_positive = outcome["t1"]["combined"] == "cancer"
            if (outcome["t2"] is not None) != t1_positive:
                violations += 1
    ok = violations == 0 and scanned > 0
    report_line(7, "gating soundness", ok, f"{scanned} outcomes scanned")
    assert ok, f"{violations} outcomes violate the t2-iff-t1-positive invariant"


# --- criterion 8: remote wire conformance -----------------------------------------

def test_criterion_8_wire_conformance(tmp_path):
    # golden request bytes
    with MockClassifyServer(MockClassifyServer.echo_scores([0.2, 0.4, 0.6])) as server:
        remote_score(server.endpoint, Tier.T1, ["alpha", "beta", "gamma"], timeout=5)
        body = server.requests[0].body
        headers = server.requests[0].headers
        path = server.requests[0].path
    golden = b'{"task":"t1","texts":["alpha","beta","gamma"]}'
    assert body == golden
    assert path == "/v1/classify"
    assert headers.get("x-client") == "reportable-triage/1"

    # count mismatch and out-of-range raise their designated error kinds
    with MockClassifyServer(MockClassifyServer.echo_scores([0.1, 0.2])) as server:
        with pytest.raises(RemoteProtocolError):
            remote_score(server.endpoint, Tier.T1, ["a", "b", "c"], timeout=5)
    with MockClassifyServer(MockClassifyServer.echo_scores([1.5])) as server:
        with pytest.raises(ScoreRangeError):
            remote_score(server.endpoint, Tier.T1, ["a"], timeout=5)

    # a 3-text batch against a stalled endpoint: the client retries the
    # configured number of times, then the triage command exits 2
    corpus = synth_corpus(SynthSpec(n_reports=3), seed=1408)
    write_corpus(corpus, tmp_path / "corpus.jsonl")
    with MockClassifyServer(MockClassifyServer.score_per_text(), sleep_s=2.0) as server:
        config = write_config(
            tmp_path, remote_kind=True,
            remote={"timeout": 0.2, "max_retries": 2,
                    "endpoints": {"t1": server.endpoint, "t2": server.endpoint}})
        code = main(["--config", str(config), "triage",
                     "--out", str(tmp_path / "o.jsonl")])
        attempts = len(server.requests)
    assert code == 2
    assert attempts == 3  # 1 initial + 2 configured retries
    report_line(8, "remote wire conformance", True,
                f"golden body ok, {attempts} attempts, exit 2")


# --- criterion 9: sectioner lossless partition --------------------------------------

CURATED_DOCS = [
    "",
    "no headers at all",
    "DIAGNOSIS:\ninvasive carcinoma\n",
    "FINAL DIAGNOSIS:\ninvasive carcinoma",
    "clinical note text\nSYNOPTIC REPORT:\nTumour size: 2 cm\nDIAGNOSIS:\nbenign",
    "DIAGNOSIS: benign nevus, excised\n",
    "SYNOPTIC REPORT:\nDIAGNOSIS:\nback to back headers\n",
    "   INDENTED HEADER:\nbody\n",
    "UNKNOWN SECTION NAME:\nsomething\nANOTHER ONE:\nmore\n",
    "preamble only\nwith a colon: in prose\n",
    "DIAGNOSIS:\r\ncarriage returns\r\nSPECIMENS RECEIVED:\r\nskin\r\n",
    "A" * 48 + ":\nmax length header\n",
    "A" * 49 + ":\ntoo long to be a header\n",
    "MIXEDcase:\nratio below threshold\n",
    "ABCDe:\nexactly at the 80% uppercase boundary\n",
    "123:\ndigits only, not a header\n",
    "DIAGNOSIS:\n\n\nblank body lines\n\n",
    "GROSS DESCRIPTION:\ntwo fragments of tissue\nDIAGNOSIS:\nbenign\n",
    "SPECIMEN(S) RECEIVED:\nparenthesised header is prose\n",
    "trailing header no newline\nDIAGNOSIS:",
]


def test_criterion_9_sectioner_lossless_partition():
    table = default_synonym_table()
    rng = random.Random(1409)
    alphabet = (
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789"
        " :\n\t&,/-().;\réµΩ北"
    )
    docs = list(CURATED_DOCS)
    for _ in range(1000):
        docs.append("".join(rng.choice(alphabet)
                            for _ in range(rng.randrange(0, 300))))
    for doc in docs:
        sections = parse_sections(doc, table)
        assert reassemble(sections) == doc
        assert parse_sections(reassemble(sections), table) == sections
    report_line(9, "sectioner lossless partition", True,
                f"{len(docs)} documents ({len(CURATED_DOCS)} curated + 1000 fuzzed)")
