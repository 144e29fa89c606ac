"""Corpus quality signals: per-document proxy scores and audit uncertainty.

No gold labels exist at corpus scale, so quality is approximated by four
bounded indicators (text corruption, numeric plausibility, schema type
conformance, structural completeness) combined into a weighted proxy score.
Audit-sample accuracy is reported with Wilson score intervals rather than a
bare proportion.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Mapping

from .errors import ConfigurationError
from .schema import SanityRule

# a run of >= 4 identical characters that are neither alphanumeric nor spaces
_ARTIFACT_RUN = re.compile(r"([^\w\s]|_)\1{3,}")
_NON_WHITESPACE = re.compile(r"\S")
_ALPHANUMERIC = re.compile(r"[^\W_]")

MAX_SYMBOL_SHARE = 0.4


def is_artifact_line(line: str) -> bool:
    """True when a line looks like OCR noise rather than prose."""
    stripped = line.strip()
    if not stripped:
        return False
    if _ARTIFACT_RUN.search(stripped):
        return True
    non_ws = len(_NON_WHITESPACE.findall(stripped))
    alnum = len(_ALPHANUMERIC.findall(stripped))
    return non_ws > 0 and (non_ws - alnum) / non_ws > MAX_SYMBOL_SHARE


def count_artifact_lines(text: str) -> tuple[int, int]:
    """(artifact lines, non-empty lines) for incremental accumulation."""
    artifacts = 0
    nonempty = 0
    for line in text.splitlines():
        if not line.strip():
            continue
        nonempty += 1
        if is_artifact_line(line):
            artifacts += 1
    return artifacts, nonempty


def corruption_indicator(text: str) -> float:
    """Share of clean lines, in [0, 1]; empty text scores 0."""
    artifacts, nonempty = count_artifact_lines(text)
    if nonempty == 0:
        return 0.0
    return 1.0 - artifacts / nonempty


def numeric_sanity_counts(
    values: Mapping[str, Any], rules: Mapping[str, SanityRule]
) -> tuple[int, int]:
    """(values passing their rule, values checked) over non-null ruled fields."""
    passed = 0
    checked = 0
    for column, rule in rules.items():
        value = values.get(column)
        if value is None:
            continue
        checked += 1
        if rule.check(value):
            passed += 1
    return passed, checked


def numeric_sanity(values: Mapping[str, Any], rules: Mapping[str, SanityRule]) -> float:
    """Share of ruled non-null values inside their plausibility bounds.

    A record with nothing to check is vacuously sane.
    """
    passed, checked = numeric_sanity_counts(values, rules)
    return 1.0 if checked == 0 else passed / checked


@dataclass(frozen=True)
class QualityIndicators:
    corruption: float
    numeric_sanity: float
    type_conformance: float
    structural_completeness: float

    def __post_init__(self) -> None:
        for name in ("corruption", "numeric_sanity", "type_conformance", "structural_completeness"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"indicator {name} out of [0, 1]: {value}")


@dataclass(frozen=True)
class QualityWeights:
    corruption: float = 0.25
    numeric_sanity: float = 0.25
    type_conformance: float = 0.25
    structural_completeness: float = 0.25

    def __post_init__(self) -> None:
        parts = (
            self.corruption,
            self.numeric_sanity,
            self.type_conformance,
            self.structural_completeness,
        )
        if any(w < 0 for w in parts):
            raise ConfigurationError("quality weights must be non-negative")
        if abs(sum(parts) - 1.0) > 1e-9:
            raise ConfigurationError(f"quality weights must sum to 1, got {sum(parts)}")


DEFAULT_WEIGHTS = QualityWeights()


def proxy_score(
    indicators: QualityIndicators, weights: QualityWeights = DEFAULT_WEIGHTS
) -> float:
    """Weighted combination of the four indicators on a 0-100 scale."""
    return 100.0 * (
        weights.corruption * indicators.corruption
        + weights.numeric_sanity * indicators.numeric_sanity
        + weights.type_conformance * indicators.type_conformance
        + weights.structural_completeness * indicators.structural_completeness
    )


def structural_completeness(page_token_counts: list[int], median_tokens: float) -> float:
    """Share of pages carrying at least 10% of the corpus-median token load."""
    if not page_token_counts:
        return 0.0
    threshold = 0.1 * median_tokens
    adequate = sum(1 for count in page_token_counts if count >= threshold)
    return adequate / len(page_token_counts)


def wilson_interval(successes: int, total: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion, in percent.

    Both endpoints are clipped to [0, 100] and rounded to one decimal.  The
    interval is asymmetric near the boundaries: a perfect audit sample still
    yields a lower bound below 100.
    """
    if total <= 0:
        raise ValueError(f"sample size must be positive, got {total}")
    if not 0 <= successes <= total:
        raise ValueError(f"successes must be within [0, {total}], got {successes}")
    if z <= 0:
        raise ValueError(f"z must be positive, got {z}")
    p = successes / total
    z2 = z * z
    denominator = 1.0 + z2 / total
    centre = (p + z2 / (2 * total)) / denominator
    half_width = (
        z * math.sqrt(p * (1.0 - p) / total + z2 / (4.0 * total * total)) / denominator
    )
    low = max(0.0, centre - half_width)
    high = min(1.0, centre + half_width)
    return round(100.0 * low, 1), round(100.0 * high, 1)
