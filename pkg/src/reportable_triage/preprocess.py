"""Input pipelines: normalization plus section prioritization and truncation.

Two complementary variants feed the classifier backends: variant A puts the
synoptic section first, variant B the diagnosis section. The remainder of the
report stays available as fallback, in the order: the other primary section,
then "specimen", then every remaining section in document order, and finally
the full normalized raw text when a report has no parsed sections at all.

Normalization lowercases, replaces unicode punctuation with spaces (so
"2cm." stays "2cm" and never fuses with a neighbour), collapses whitespace
runs, and trims. Digits are kept: tumour sizes and grades are class signal.
Token budgeting counts whitespace tokens; model-specific subword tokenizers
live behind the backend boundary.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Sequence

from .corpus import PathologyReport
from .errors import ValidationError

DEFAULT_TOKEN_BUDGET = 512


class PipelineVariant(str, Enum):
    A_SYNOPTIC_FIRST = "a_synoptic_first"
    B_DIAGNOSIS_FIRST = "b_diagnosis_first"

    @property
    def priority_section(self) -> str:
        return "synoptic" if self is PipelineVariant.A_SYNOPTIC_FIRST else "diagnosis"

    @property
    def secondary_section(self) -> str:
        return "diagnosis" if self is PipelineVariant.A_SYNOPTIC_FIRST else "synoptic"

    @classmethod
    def parse(cls, raw: str) -> "PipelineVariant":
        key = raw.strip().lower()
        aliases = {
            "a": cls.A_SYNOPTIC_FIRST,
            "a_synoptic_first": cls.A_SYNOPTIC_FIRST,
            "synoptic": cls.A_SYNOPTIC_FIRST,
            "b": cls.B_DIAGNOSIS_FIRST,
            "b_diagnosis_first": cls.B_DIAGNOSIS_FIRST,
            "diagnosis": cls.B_DIAGNOSIS_FIRST,
        }
        if key not in aliases:
            raise ValidationError(f"unknown pipeline variant {raw!r} (use 'a' or 'b')")
        return aliases[key]


@dataclass(frozen=True)
class NormalizedInput:
    text: str
    approx_token_count: int
    truncated: bool
    sections_used: tuple[str, ...]


@lru_cache(maxsize=4096)
def _punct_to_space(ch: str) -> str:
    return " " if unicodedata.category(ch).startswith("P") else ch


def normalize_text(text: str) -> str:
    """Lowercase, punctuation to single spaces, whitespace collapsed, trimmed."""
    replaced = "".join(_punct_to_space(ch) for ch in text.lower())
    return " ".join(replaced.split())


DEFAULT_FALLBACK_SECTIONS = ("specimen",)


def _ordered_chunks(
    report: PathologyReport,
    variant: PipelineVariant,
    fallback_sections: Sequence[str],
) -> list[tuple[str, str]]:
    """(section name, raw body) pairs in assembly priority order."""
    sections = report.sections
    primary_names = (variant.priority_section, variant.secondary_section,
                     *fallback_sections)
    used_indices: set[int] = set()
    chunks: list[tuple[str, str]] = []
    for name in primary_names:
        for i, section in enumerate(sections):
            if section.name == name and i not in used_indices:
                used_indices.add(i)
                chunks.append((section.name, section.text))
                break
    for i, section in enumerate(sections):
        if i not in used_indices:
            chunks.append((section.name, section.text))
    return chunks


def assemble_input(
    report: PathologyReport,
    variant: PipelineVariant,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
    fallback_sections: Sequence[str] = DEFAULT_FALLBACK_SECTIONS,
) -> NormalizedInput:
    """Build the exact text a backend scores for this report and variant.

    Assembly order: the variant's priority section, the other primary
    section, then fallback_sections, then every remaining section in
    document order; unsectioned reports fall back to the normalized raw
    text (recorded as pseudo-section "raw_text").
    """
    if token_budget <= 0:
        raise ValidationError("token_budget must be positive")
    if not report.sections and not report.raw_text:
        raise ValidationError(f"empty report {report.report_id!r}")

    if report.sections:
        chunks = _ordered_chunks(report, variant, fallback_sections)
    else:
        chunks = [("raw_text", report.raw_text)]

    kept: list[str] = []
    sections_used: list[str] = []
    remaining = token_budget
    truncated = False
    for name, raw in chunks:
        tokens = normalize_text(raw).split()
        if not tokens:
            continue
        if remaining == 0:
            truncated = True
            break
        take = tokens[:remaining]
        if len(take) < len(tokens):
            truncated = True
        kept.extend(take)
        sections_used.append(name)
        remaining -= len(take)

    return NormalizedInput(
        text=" ".join(kept),
        approx_token_count=len(kept),
        truncated=truncated,
        sections_used=tuple(sections_used),
    )
