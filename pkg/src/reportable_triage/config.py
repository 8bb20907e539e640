"""Declarative run configuration for the command-line pipeline.

One JSON document drives every command; the only environment overrides are
the remote endpoints (TRIAGE_REMOTE_ENDPOINT_T1 / TRIAGE_REMOTE_ENDPOINT_T2),
so secrets and machine-local addresses stay out of committed files.

Example:

    {
      "out_dir": "run",
      "corpus": "corpus.jsonl",
      "workers": 1,
      "tiers": {
        "t1": {
          "split": {"train_fraction": 0.8, "seed": 11, "stratified": true},
          "undersample": {"ratio": 0.8, "seed": 12},
          "train": {"epochs": 5, "learning_rate": 0.2,
                    "feature_dim": 262144, "l2": 1e-06, "seed": 13},
          "members": [
            {"backend_id": "synoptic-baseline", "kind": "native_baseline",
             "variant": "a", "threshold": 0.5, "token_budget": 512,
             "model_path": "models/t1_a.bin"},
            {"backend_id": "diagnosis-baseline", "kind": "native_baseline",
             "variant": "b", "threshold": 0.5, "token_budget": 512,
             "model_path": "models/t1_b.bin"}
          ]
        },
        "t2": { ... same shape ... }
      },
      "remote": {"timeout": 10.0, "max_retries": 2,
                 "endpoints": {"t1": null, "t2": null}}
    }

Relative paths (corpus, model_path) resolve against out_dir's parent-free
base: corpus relative to the config file location, model paths relative to
out_dir. Seeds are mandatory wherever randomness exists; there are no
wall-clock defaults.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .backend.baseline import TrainHyper
from .backend.remote import DEFAULT_MAX_RETRIES, DEFAULT_TIMEOUT
from .corpus import Tier, is_normalized_section_name
from .errors import ConfigurationError
from .preprocess import DEFAULT_FALLBACK_SECTIONS, DEFAULT_TOKEN_BUDGET, PipelineVariant
from .sampler import SplitSpec, UndersamplePolicy, default_policy
from .sectioner import SectionSynonymTable, default_synonym_table, load_synonym_table

ENV_ENDPOINT = {Tier.T1: "TRIAGE_REMOTE_ENDPOINT_T1", Tier.T2: "TRIAGE_REMOTE_ENDPOINT_T2"}


@dataclass(frozen=True)
class MemberConfig:
    backend_id: str
    kind: str  # "native_baseline" | "remote"
    variant: PipelineVariant
    threshold: float = 0.5
    token_budget: int = DEFAULT_TOKEN_BUDGET
    fallback_sections: tuple[str, ...] = DEFAULT_FALLBACK_SECTIONS
    model_path: Optional[str] = None


@dataclass(frozen=True)
class TierSettings:
    task: Tier
    split: SplitSpec
    policy: UndersamplePolicy
    train: TrainHyper
    train_seed: int
    members: tuple[MemberConfig, MemberConfig]


@dataclass(frozen=True)
class RemoteSettings:
    timeout: float = DEFAULT_TIMEOUT
    max_retries: int = DEFAULT_MAX_RETRIES
    endpoints: dict = field(default_factory=dict)

    def endpoint_for(self, task: Tier) -> Optional[str]:
        env = os.environ.get(ENV_ENDPOINT[task])
        if env:
            return env
        return self.endpoints.get(task.value)


@dataclass(frozen=True)
class RunConfig:
    base_dir: Path
    out_dir: Path
    corpus_path: Optional[Path]
    workers: int
    tiers: dict[Tier, TierSettings]
    remote: RemoteSettings
    section_synonyms_path: Optional[Path] = None

    def synonym_table(self) -> SectionSynonymTable:
        if self.section_synonyms_path is None:
            return default_synonym_table()
        return load_synonym_table(self.section_synonyms_path)

    def tier(self, task: Tier) -> TierSettings:
        if task not in self.tiers:
            raise ConfigurationError(f"config has no settings for tier {task.value!r}")
        return self.tiers[task]

    def model_file(self, member: MemberConfig) -> Path:
        if member.model_path is None:
            raise ConfigurationError(
                f"member {member.backend_id!r} is native_baseline but has no model_path"
            )
        path = Path(member.model_path)
        return path if path.is_absolute() else self.out_dir / path

    def dataset_dir(self, task: Tier) -> Path:
        return self.out_dir / task.value


def _need(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigurationError(f"{where}: missing required key {key!r}")
    return obj[key]


def _parse_member(obj: dict, where: str) -> MemberConfig:
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{where}: member must be an object")
    kind = _need(obj, "kind", where)
    if kind not in ("native_baseline", "remote"):
        raise ConfigurationError(f"{where}: unknown backend kind {kind!r}")
    threshold = float(obj.get("threshold", 0.5))
    if not 0.0 < threshold < 1.0:
        raise ConfigurationError(f"{where}: threshold must be in (0, 1)")
    token_budget = int(obj.get("token_budget", DEFAULT_TOKEN_BUDGET))
    if token_budget <= 0:
        raise ConfigurationError(f"{where}: token_budget must be positive")
    fallback = obj.get("fallback_sections", list(DEFAULT_FALLBACK_SECTIONS))
    if (not isinstance(fallback, list)
            or not all(isinstance(s, str) and is_normalized_section_name(s)
                       for s in fallback)):
        raise ConfigurationError(
            f"{where}: fallback_sections must be a list of normalized section names"
        )
    return MemberConfig(
        backend_id=str(_need(obj, "backend_id", where)),
        kind=kind,
        variant=PipelineVariant.parse(str(_need(obj, "variant", where))),
        threshold=threshold,
        token_budget=token_budget,
        fallback_sections=tuple(fallback),
        model_path=obj.get("model_path"),
    )


def _parse_tier(task: Tier, obj: dict, where: str) -> TierSettings:
    split_obj = _need(obj, "split", where)
    split = SplitSpec(
        seed=int(_need(split_obj, "seed", f"{where}.split")),
        train_fraction=float(split_obj.get("train_fraction", 0.8)),
        stratified=bool(split_obj.get("stratified", True)),
    )

    under_obj = _need(obj, "undersample", where)
    under_seed = int(_need(under_obj, "seed", f"{where}.undersample"))
    base_policy = default_policy(task, under_seed)
    kept = under_obj.get("kept_class", base_policy.kept_class.value)
    sampled = under_obj.get("sampled_class", base_policy.sampled_class.value)
    policy = UndersamplePolicy(
        task=task,
        kept_class=task.parse_label(kept),
        sampled_class=task.parse_label(sampled),
        ratio=float(under_obj.get("ratio", base_policy.ratio)),
        seed=under_seed,
    )

    train_obj = _need(obj, "train", where)
    hyper = TrainHyper(
        epochs=int(train_obj.get("epochs", 5)),
        learning_rate=float(train_obj.get("learning_rate", 0.2)),
        feature_dim=int(train_obj.get("feature_dim", TrainHyper().feature_dim)),
        l2=float(train_obj.get("l2", 1e-6)),
    )
    train_seed = int(_need(train_obj, "seed", f"{where}.train"))

    members_obj = _need(obj, "members", where)
    if not isinstance(members_obj, list) or len(members_obj) != 2:
        raise ConfigurationError(f"{where}: exactly two members are required per tier")
    members = tuple(
        _parse_member(m, f"{where}.members[{i}]") for i, m in enumerate(members_obj)
    )
    if {m.variant for m in members} != {PipelineVariant.A_SYNOPTIC_FIRST,
                                        PipelineVariant.B_DIAGNOSIS_FIRST}:
        raise ConfigurationError(f"{where}: members must cover variants A and B exactly")
    ids = [(m.backend_id) for m in members]
    if len(set(ids)) != 2:
        raise ConfigurationError(f"{where}: member backend_ids must be distinct")
    return TierSettings(task=task, split=split, policy=policy, train=hyper,
                        train_seed=train_seed, members=members)  # type: ignore[arg-type]


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{path}: config must be a JSON object")

    base_dir = path.resolve().parent
    out_dir = Path(str(_need(obj, "out_dir", str(path))))
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir

    corpus_raw = obj.get("corpus")
    corpus_path = None
    if corpus_raw is not None:
        corpus_path = Path(str(corpus_raw))
        if not corpus_path.is_absolute():
            corpus_path = base_dir / corpus_path

    workers = int(obj.get("workers", 1))
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")

    tiers_obj = _need(obj, "tiers", str(path))
    tiers: dict[Tier, TierSettings] = {}
    for tier in (Tier.T1, Tier.T2):
        if tier.value in tiers_obj:
            tiers[tier] = _parse_tier(tier, tiers_obj[tier.value], f"tiers.{tier.value}")
    if not tiers:
        raise ConfigurationError(f"{path}: config defines no tiers")

    remote_obj = obj.get("remote", {})
    remote = RemoteSettings(
        timeout=float(remote_obj.get("timeout", DEFAULT_TIMEOUT)),
        max_retries=int(remote_obj.get("max_retries", DEFAULT_MAX_RETRIES)),
        endpoints=dict(remote_obj.get("endpoints", {})),
    )

    synonyms_raw = obj.get("section_synonyms")
    synonyms_path = None
    if synonyms_raw is not None:
        synonyms_path = Path(str(synonyms_raw))
        if not synonyms_path.is_absolute():
            synonyms_path = base_dir / synonyms_path

    return RunConfig(base_dir=base_dir, out_dir=out_dir, corpus_path=corpus_path,
                     workers=workers, tiers=tiers, remote=remote,
                     section_synonyms_path=synonyms_path)
