"""Two-tier orchestration and the OR-ensemble combiner.

Each tier runs exactly two members (one synoptic-first, one diagnosis-first),
and a report is positive when at least one member says so. The OR rule means
the ensemble's missed positives are exactly the intersection of the members'
missed positives, which is the whole point: sensitivity never drops below the
better member.

Tier 2 runs on the reports tier 1 called cancer (production gating). For
evaluation against gold tier-2 annotations there is an explicit-scope mode
that scores tier 2 for a caller-supplied report set instead; outcomes written
that way are evaluation artifacts, not production triage.

Member failure fails the whole batch: silently degrading to a single-model
"ensemble" would misstate the sensitivity guarantee.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

from .backend.base import ClassifierBackend, Decision, decide
from .corpus import PathologyReport, T1Label, T2Label, Tier
from .errors import ConfigurationError, TierExecutionError, TriageError, ValidationError
from .preprocess import (
    DEFAULT_FALLBACK_SECTIONS,
    DEFAULT_TOKEN_BUDGET,
    PipelineVariant,
    assemble_input,
)

DEFAULT_BATCH_SIZE = 256


class FinalLabel(str, Enum):
    NON_CANCER = "non_cancer"
    CANCER_NON_REPORTABLE = "cancer_non_reportable"
    CANCER_REPORTABLE = "cancer_reportable"


@dataclass(frozen=True)
class TierMember:
    backend: ClassifierBackend
    variant: PipelineVariant
    threshold: float = 0.5
    token_budget: int = DEFAULT_TOKEN_BUDGET
    fallback_sections: tuple[str, ...] = DEFAULT_FALLBACK_SECTIONS


@dataclass(frozen=True)
class TierConfig:
    task: Tier
    members: tuple[TierMember, TierMember]

    def __post_init__(self) -> None:
        if len(self.members) != 2:
            raise ConfigurationError("a tier needs exactly two members")
        variants = {m.variant for m in self.members}
        if len(variants) != 2:
            raise ConfigurationError(
                "tier members must use distinct pipeline variants (one A, one B)"
            )


@dataclass(frozen=True)
class EnsembleResult:
    member_decisions: tuple[Decision, ...]
    combined_label: T1Label | T2Label
    combined_by: str = "or"

    @property
    def is_positive(self) -> bool:
        return self.combined_label in (T1Label.CANCER, T2Label.REPORTABLE)


@dataclass(frozen=True)
class TriageOutcome:
    report_id: str
    t1: EnsembleResult
    t2: Optional[EnsembleResult]
    final: FinalLabel


def or_combine(decisions: Sequence[Decision]) -> T1Label | T2Label:
    """Positive iff at least one member decision is positive."""
    if not decisions:
        raise ConfigurationError("or_combine requires at least one decision")
    tasks = {type(d.label) for d in decisions}
    if len(tasks) != 1:
        raise ConfigurationError("or_combine received decisions from mixed tasks")
    positive = any(d.is_positive for d in decisions)
    tier = Tier.T1 if tasks.pop() is T1Label else Tier.T2
    return tier.positive if positive else tier.negative


def _score_batch(
    member: TierMember,
    task: Tier,
    batch: Sequence[PathologyReport],
) -> list[Decision]:
    inputs = [assemble_input(r, member.variant, member.token_budget,
                             member.fallback_sections) for r in batch]
    try:
        scores = member.backend.score_batch(inputs)
    except TriageError as exc:
        raise TierExecutionError(
            f"backend {member.backend.backend_id!r} failed on reports "
            f"{batch[0].report_id!r}..{batch[-1].report_id!r}: {exc}"
        ) from exc
    if len(scores) != len(batch):
        raise TierExecutionError(
            f"backend {member.backend.backend_id!r} returned {len(scores)} scores "
            f"for {len(batch)} reports"
        )
    return [decide(s, member.threshold, task, member.backend.backend_id) for s in scores]


def run_tier(
    reports: Sequence[PathologyReport],
    config: TierConfig,
    batch_size: int = DEFAULT_BATCH_SIZE,
    max_workers: int = 1,
) -> list[EnsembleResult]:
    """Score every report with both members; order-preserving, all-or-nothing.

    Batches may be scored by up to max_workers threads; results are
    reassembled by batch index, so the output never depends on scheduling.
    """
    if not reports:
        return []
    starts = list(range(0, len(reports), batch_size))
    jobs = [
        (mi, si, reports[start:start + batch_size])
        for mi, _ in enumerate(config.members)
        for si, start in enumerate(starts)
    ]
    pieces: dict[tuple[int, int], list[Decision]] = {}
    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = {
                (mi, si): pool.submit(_score_batch, config.members[mi], config.task, batch)
                for mi, si, batch in jobs
            }
            pieces = {key: fut.result() for key, fut in futures.items()}
    else:
        for mi, si, batch in jobs:
            pieces[(mi, si)] = _score_batch(config.members[mi], config.task, batch)

    per_member = [
        [d for si in range(len(starts)) for d in pieces[(mi, si)]]
        for mi, _ in enumerate(config.members)
    ]
    return [
        EnsembleResult(member_decisions=tuple(pair), combined_label=or_combine(pair))
        for pair in zip(*per_member)
    ]


def triage(
    reports: Sequence[PathologyReport],
    t1: TierConfig,
    t2: TierConfig,
    *,
    batch_size: int = DEFAULT_BATCH_SIZE,
    max_workers: int = 1,
    t2_report_ids: Optional[set[str]] = None,
) -> list[TriageOutcome]:
    """Run the cascade over reports, preserving input order.

    With t2_report_ids=None (production mode) tier 2 runs exactly on the
    reports tier 1 called cancer. Passing an explicit id set scores tier 2
    for those reports instead (gold-gated evaluation); the final label still
    follows production semantics, i.e. a tier-1-negative report stays
    non_cancer no matter what tier 2 said.
    """
    if t1.task is not Tier.T1 or t2.task is not Tier.T2:
        raise ConfigurationError("triage needs a t1 config and a t2 config, in that order")
    t1_results = run_tier(reports, t1, batch_size, max_workers)

    if t2_report_ids is None:
        selected = [i for i, res in enumerate(t1_results) if res.is_positive]
    else:
        selected = [i for i, r in enumerate(reports) if r.report_id in t2_report_ids]
    t2_results = run_tier([reports[i] for i in selected], t2, batch_size, max_workers)
    t2_by_index = dict(zip(selected, t2_results))

    outcomes: list[TriageOutcome] = []
    for i, (report, t1_res) in enumerate(zip(reports, t1_results)):
        t2_res = t2_by_index.get(i)
        if not t1_res.is_positive:
            final = FinalLabel.NON_CANCER
        elif t2_res is not None and t2_res.is_positive:
            final = FinalLabel.CANCER_REPORTABLE
        else:
            final = FinalLabel.CANCER_NON_REPORTABLE
        outcomes.append(
            TriageOutcome(report_id=report.report_id, t1=t1_res, t2=t2_res, final=final)
        )
    return outcomes


def check_gating_soundness(outcomes: Iterable[TriageOutcome]) -> None:
    """Assert the production invariant: t2 present iff t1 combined positive."""
    for outcome in outcomes:
        has_t2 = outcome.t2 is not None
        if has_t2 != outcome.t1.is_positive:
            raise ValidationError(
                f"outcome {outcome.report_id!r}: t2 "
                f"{'present' if has_t2 else 'absent'} with t1 "
                f"{'positive' if outcome.t1.is_positive else 'negative'}"
            )


# --- outcome file serialization ---------------------------------------------

def _ensemble_to_dict(res: EnsembleResult) -> dict:
    return {
        "combined": res.combined_label.value,
        "combined_by": res.combined_by,
        "members": [
            {
                "backend_id": d.backend_id,
                "label": d.label.value,
                "probability": d.score.probability,
                "threshold": d.threshold,
            }
            for d in res.member_decisions
        ],
    }


def outcome_to_dict(outcome: TriageOutcome) -> dict:
    return {
        "report_id": outcome.report_id,
        "final": outcome.final.value,
        "t1": _ensemble_to_dict(outcome.t1),
        "t2": _ensemble_to_dict(outcome.t2) if outcome.t2 is not None else None,
    }


def dumps_outcome(outcome: TriageOutcome) -> str:
    return json.dumps(outcome_to_dict(outcome), ensure_ascii=False, separators=(",", ":"))


def read_outcomes(path) -> list[dict]:
    """Parse an outcomes JSONL file into validated dicts for evaluation."""
    out: list[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: line {lineno}: invalid JSON: {exc.msg}") from None
            for key in ("report_id", "final", "t1"):
                if key not in obj:
                    raise ValidationError(f"{path}: line {lineno}: missing field {key!r}")
            out.append(obj)
    return out
