"""Schema loading, the validation gate and derived column space."""

from __future__ import annotations

from pathlib import Path

import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from evidencepipe.errors import SchemaDefinitionError
from evidencepipe.schema import (
    SanityRule,
    bundled_schema_path,
    canonical_text,
    column_kinds,
    derive_columns,
    load_schema_set,
    sanity_rules,
    validate_annotation,
)

# -- loading -------------------------------------------------------------------


def test_bundled_schema_has_five_payloads(schema_set) -> None:
    assert schema_set.version == "doac.v1"
    assert schema_set.payload_ids == (
        "meta_design",
        "population_indications",
        "methods",
        "outcomes",
        "diagnostic_performance",
    )


def test_loading_by_name_and_by_path_agree(schema_set) -> None:
    by_path = load_schema_set(bundled_schema_path("doac.v1"))
    assert by_path.version == schema_set.version
    assert by_path.payload_ids == schema_set.payload_ids


def test_derived_columns_start_with_fixed_columns(schema_set) -> None:
    columns = derive_columns(schema_set)
    assert columns[:2] == ["source_key", "conflict_flags"]
    assert "meta_design.year" in columns
    assert "diagnostic_performance.performance_evidence" in columns
    assert len(columns) == len(set(columns))
    # payload-major ordering mirrors the schema declaration
    year = columns.index("meta_design.year")
    molecules = columns.index("population_indications.doac_molecules")
    assert year < molecules


def test_column_kinds_and_sanity_rules(schema_set) -> None:
    kinds = column_kinds(schema_set)
    assert kinds["meta_design.year"] == "integer"
    assert kinds["diagnostic_performance.sensitivity_pct"] == "real"
    assert kinds["population_indications.doac_molecules"] == "list_of_enum"
    rules = sanity_rules(schema_set)
    assert rules["meta_design.year"].check(2020)
    assert not rules["meta_design.year"].check(1800)
    assert rules["diagnostic_performance.correlation_coefficient"].check(-0.5)
    assert not rules["diagnostic_performance.correlation_coefficient"].check(1.5)


def _broken_schema(tmp_path: Path, mutate) -> Path:
    with open(bundled_schema_path("doac.v1"), "r", encoding="utf-8") as handle:
        data = yaml.safe_load(handle)
    mutate(data)
    path = tmp_path / "broken.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def test_rejects_wrong_payload_set(tmp_path: Path) -> None:
    path = _broken_schema(tmp_path, lambda d: d["payloads"].pop())
    with pytest.raises(SchemaDefinitionError, match="payload"):
        load_schema_set(path)


def test_rejects_unknown_field_kind(tmp_path: Path) -> None:
    def mutate(d):
        d["payloads"][0]["fields"][0]["kind"] = "floating"

    with pytest.raises(SchemaDefinitionError, match="kind"):
        load_schema_set(_broken_schema(tmp_path, mutate))


def test_rejects_dangling_evidence_partner(tmp_path: Path) -> None:
    def mutate(d):
        d["payloads"][0]["fields"][5]["evidence"] = "no_such_field"

    with pytest.raises(SchemaDefinitionError):
        load_schema_set(_broken_schema(tmp_path, mutate))


def test_rejects_enum_without_vocabulary(tmp_path: Path) -> None:
    def mutate(d):
        del d["payloads"][0]["fields"][5]["vocabulary"]

    with pytest.raises(SchemaDefinitionError):
        load_schema_set(_broken_schema(tmp_path, mutate))


# -- the validation gate ---------------------------------------------------------


@pytest.fixture()
def meta(schema_set):
    return schema_set.payload("meta_design")


@pytest.fixture()
def population(schema_set):
    return schema_set.payload("population_indications")


@pytest.fixture()
def methods(schema_set):
    return schema_set.payload("methods")


def test_integer_coercion_from_string(meta) -> None:
    outcome = validate_annotation(meta, {"year": " 2014 "})
    assert outcome.values["year"] == 2014
    assert not outcome.violations
    assert outcome.conformance_ratio == 1.0


def test_integer_rejection_nulls_field(meta) -> None:
    outcome = validate_annotation(meta, {"year": "two thousand"})
    assert outcome.values["year"] is None
    assert [v.code for v in outcome.violations] == ["type"]
    assert outcome.conformance_ratio == 0.0


def test_boolean_is_not_a_number(meta) -> None:
    outcome = validate_annotation(meta, {"year": True})
    assert outcome.values["year"] is None
    assert outcome.violations


def test_real_coercion(schema_set) -> None:
    perf = schema_set.payload("diagnostic_performance")
    outcome = validate_annotation(perf, {"sensitivity_pct": "93.5"})
    assert outcome.values["sensitivity_pct"] == 93.5
    outcome = validate_annotation(perf, {"sensitivity_pct": float("nan")})
    assert outcome.values["sensitivity_pct"] is None
    assert outcome.violations


def test_enum_requires_exact_label_after_trimming(meta) -> None:
    ok = validate_annotation(meta, {"primary_study_design": "  prospective cohort "})
    assert ok.values["primary_study_design"] == "prospective cohort"
    # matching is exact (case included): unmapped surface forms are rejected,
    # not guessed -- forgiving forms must be declared as aliases
    for bad_label in ("Prospective Cohort", "prospective-ish"):
        bad = validate_annotation(meta, {"primary_study_design": bad_label})
        assert bad.values["primary_study_design"] is None
        assert [v.code for v in bad.violations] == ["vocabulary"]


def test_enum_alias_resolves_to_canonical_label(meta, methods) -> None:
    outcome = validate_annotation(meta, {"primary_study_design": "RCT"})
    assert outcome.values["primary_study_design"] == "randomized controlled trial"
    outcome = validate_annotation(methods, {"measurement_methods": ["anti-Xa"]})
    assert outcome.values["measurement_methods"] == ["calibrated anti-Xa assay"]


def test_list_dedupes_preserving_first_appearance(population) -> None:
    outcome = validate_annotation(
        population,
        {"doac_molecules": ["rivaroxaban", "apixaban", "rivaroxaban", "apixaban"]},
    )
    assert outcome.values["doac_molecules"] == ["rivaroxaban", "apixaban"]
    assert not outcome.violations


def test_list_keeps_good_items_and_flags_bad_ones(population) -> None:
    outcome = validate_annotation(
        population, {"doac_molecules": ["apixaban", "warfarin"]}
    )
    assert outcome.values["doac_molecules"] == ["apixaban"]
    assert [v.code for v in outcome.violations] == ["vocabulary"]
    assert outcome.conformance_ratio == 0.0


def test_unknown_keys_are_recorded_not_propagated(meta) -> None:
    outcome = validate_annotation(meta, {"year": 2000, "surprise": "x"})
    assert outcome.unknown_keys == ["surprise"]
    assert "surprise" not in outcome.values
    assert outcome.conformance_ratio == 1.0


def test_conformance_ratio_counts_fields_not_violations(population) -> None:
    outcome = validate_annotation(
        population,
        {
            "total_patients_measured": "not-a-number",  # violating field
            "doac_molecules": ["apixaban"],  # clean field
        },
    )
    assert outcome.conformance_ratio == pytest.approx(0.5)


def test_empty_response_is_vacuously_conformant(meta) -> None:
    outcome = validate_annotation(meta, {})
    assert outcome.conformance_ratio == 1.0
    assert all(value is None for value in outcome.values.values())
    outcome = validate_annotation(meta, None)
    assert outcome.conformance_ratio == 1.0


def test_every_schema_field_is_present_in_output(meta) -> None:
    outcome = validate_annotation(meta, {"year": 1999})
    assert set(outcome.values) == set(meta.field_names)


def test_validation_is_idempotent_on_examples(population) -> None:
    first = validate_annotation(
        population,
        {
            "total_patients_measured": "250",
            "doac_molecules": ["Apixaban", "VTE?"],
            "population_evidence": ["  Some sentence.  "],
        },
    )
    second = validate_annotation(population, first.values)
    assert second.values == first.values
    assert not second.violations
    assert second.conformance_ratio == 1.0


_raw_values = st.one_of(
    st.none(),
    st.integers(min_value=-10**6, max_value=10**6),
    st.floats(allow_nan=False, allow_infinity=False, width=32),
    st.text(max_size=20),
    st.lists(st.text(max_size=15), max_size=4),
    st.booleans(),
)


@given(
    raw=st.dictionaries(
        keys=st.sampled_from(
            [
                "total_patients_measured",
                "doac_molecules",
                "anticoagulation_indications",
                "population_evidence",
                "mystery_key",
            ]
        ),
        values=_raw_values,
        max_size=5,
    )
)
def test_validation_is_idempotent_property(raw) -> None:
    payload = load_schema_set().payload("population_indications")
    first = validate_annotation(payload, raw)
    second = validate_annotation(payload, first.values)
    assert second.values == first.values
    assert not second.violations
    assert second.conformance_ratio == 1.0
    assert 0.0 <= first.conformance_ratio <= 1.0


def test_canonical_text_trims_and_normalizes() -> None:
    assert canonical_text("  label ") == "label"
    assert canonical_text("café") == "café"  # NFC composition
    assert canonical_text("inner   spacing") == "inner   spacing"  # kept verbatim


def test_sanity_rule_bounds() -> None:
    rule = SanityRule(minimum=0, maximum=100)
    assert rule.check(0) and rule.check(100) and rule.check(50.5)
    assert not rule.check(-0.1) and not rule.check(100.1)
    assert not rule.check("97")  # non-numeric values never pass
