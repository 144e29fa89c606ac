"""Corruption heuristics, proxy scoring and audit intervals."""

from __future__ import annotations

import random

import pytest

from evidencepipe.errors import ConfigurationError
from evidencepipe.quality import (
    QualityIndicators,
    QualityWeights,
    corruption_indicator,
    count_artifact_lines,
    is_artifact_line,
    numeric_sanity,
    proxy_score,
    structural_completeness,
    wilson_interval,
)
from evidencepipe.schema import SanityRule

# -- artifact detection -----------------------------------------------------------


@pytest.mark.parametrize(
    "line",
    [
        "~~~~~~~~~~",
        "....",  # run of four identical symbols
        "____",  # underscores count as symbols here
        "|||||||| column debris ||||||||",
        "###$%@! mostly symbols #$%&",
        "a !!!! b",
    ],
)
def test_artifact_lines_detected(line: str) -> None:
    assert is_artifact_line(line)


@pytest.mark.parametrize(
    "line",
    [
        "A perfectly ordinary sentence.",
        "Values were 93.5% (95% CI 88-97).",
        "and then... the levels fell",  # three repeats stay under the run rule
        "p < 0.001; n = 120",
        "",
        "   ",
    ],
)
def test_clean_lines_pass(line: str) -> None:
    assert not is_artifact_line(line)


def test_count_artifact_lines_skips_blanks() -> None:
    text = "good line\n\n~~~~~~\n   \nanother good line\n####\n"
    assert count_artifact_lines(text) == (2, 4)


def test_corruption_indicator_shares() -> None:
    assert corruption_indicator("clean\nlines\nonly") == 1.0
    assert corruption_indicator("~~~~\n####") == 0.0
    assert corruption_indicator("clean\n~~~~") == 0.5
    assert corruption_indicator("") == 0.0
    assert corruption_indicator("   \n \n") == 0.0


# -- numeric sanity -----------------------------------------------------------------


def test_numeric_sanity_counts_only_ruled_non_null_fields() -> None:
    rules = {
        "a.x": SanityRule(minimum=0, maximum=100),
        "a.y": SanityRule(minimum=1950, maximum=2035),
    }
    values = {"a.x": 50, "a.y": 1800, "a.z": "unruled"}
    assert numeric_sanity(values, rules) == 0.5
    assert numeric_sanity({"a.x": None, "a.y": None}, rules) == 1.0  # vacuous
    assert numeric_sanity({}, {}) == 1.0


# -- proxy score -----------------------------------------------------------------


def test_proxy_score_with_equal_weights() -> None:
    indicators = QualityIndicators(1.0, 1.0, 0.9, 0.8)
    assert proxy_score(indicators) == pytest.approx(92.5)


def test_proxy_score_extremes() -> None:
    assert proxy_score(QualityIndicators(1.0, 1.0, 1.0, 1.0)) == 100.0
    assert proxy_score(QualityIndicators(0.0, 0.0, 0.0, 0.0)) == 0.0


def test_proxy_score_respects_custom_weights() -> None:
    weights = QualityWeights(0.7, 0.1, 0.1, 0.1)
    indicators = QualityIndicators(0.0, 1.0, 1.0, 1.0)
    assert proxy_score(indicators, weights) == pytest.approx(30.0)


def test_indicator_and_weight_validation() -> None:
    with pytest.raises(ConfigurationError):
        QualityIndicators(1.1, 0.5, 0.5, 0.5)
    with pytest.raises(ConfigurationError):
        QualityIndicators(-0.01, 0.5, 0.5, 0.5)
    with pytest.raises(ConfigurationError):
        QualityWeights(0.5, 0.5, 0.5, 0.5)  # does not sum to one
    with pytest.raises(ConfigurationError):
        QualityWeights(-0.25, 0.5, 0.5, 0.25)


def test_structural_completeness_threshold() -> None:
    # threshold is 10% of the corpus median page token load
    assert structural_completeness([100, 100, 100], median_tokens=100) == 1.0
    assert structural_completeness([100, 9, 100], median_tokens=100) == pytest.approx(2 / 3)
    assert structural_completeness([10, 10], median_tokens=100) == 1.0  # boundary: >= 10
    assert structural_completeness([], median_tokens=100) == 0.0


# -- Wilson intervals -----------------------------------------------------------------


def test_wilson_reference_points() -> None:
    assert wilson_interval(50, 50) == (92.9, 100.0)
    assert wilson_interval(0, 50) == (0.0, 7.1)


def test_wilson_is_asymmetric_near_boundaries() -> None:
    low, high = wilson_interval(49, 50)
    assert high < 100.0
    assert (high - 98.0) < (98.0 - low)  # wider tail towards the middle


def mpmath_wilson(successes: int, total: int, z: float = 1.96) -> tuple[float, float]:
    """High-precision reimplementation of the interval, for cross-checking."""
    import mpmath as mp

    mp.mp.dps = 50
    s, n, zz = mp.mpf(successes), mp.mpf(total), mp.mpf(z)
    p = s / n
    denom = 1 + zz**2 / n
    centre = (p + zz**2 / (2 * n)) / denom
    half = zz * mp.sqrt(p * (1 - p) / n + zz**2 / (4 * n**2)) / denom
    low = max(mp.mpf(0), centre - half) * 100
    high = min(mp.mpf(1), centre + half) * 100
    return float(low), float(high)


def test_wilson_matches_high_precision_oracle() -> None:
    rng = random.Random(9)
    for _ in range(100):
        total = rng.randint(1, 500)
        successes = rng.randint(0, total)
        low, high = wilson_interval(successes, total)
        exact_low, exact_high = mpmath_wilson(successes, total)
        assert abs(low - exact_low) <= 0.05 + 1e-12
        assert abs(high - exact_high) <= 0.05 + 1e-12


def test_wilson_rejects_bad_inputs() -> None:
    with pytest.raises(ValueError):
        wilson_interval(1, 0)
    with pytest.raises(ValueError):
        wilson_interval(-1, 10)
    with pytest.raises(ValueError):
        wilson_interval(11, 10)
    with pytest.raises(ValueError):
        wilson_interval(5, 10, z=0)
