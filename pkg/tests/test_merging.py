"""Cross-unit consolidation: unanimity, conflicts, unions, review routing."""

from __future__ import annotations

import random
from typing import Any

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evidencepipe.backend import UnitAnnotation
from evidencepipe.chunking import caption_unit_id, chunk_unit_id, unit_sort_key
from evidencepipe.merging import integrate_payloads, merge_payload
from evidencepipe.schema import load_schema_set

KEY = "a" * 40
SCHEMA = load_schema_set()
POPULATION = SCHEMA.payload("population_indications")

MOLECULES = ["apixaban", "rivaroxaban", "edoxaban", "dabigatran"]
SENTENCES = ["sentence one.", "sentence two.", "sentence three."]


def oracle_merge(payload, annotations) -> tuple[dict[str, Any], set[str]]:
    """Brute-force restatement of the merge rules, used as an oracle.

    Enumerates every non-null value per field across usable units in
    document order: scalars must be unanimous (else null + conflict), lists
    union with first-appearance order.
    """
    ordered = sorted(annotations, key=lambda a: unit_sort_key(a.unit_id))
    usable = [a for a in ordered if a.status == "ok"]
    values: dict[str, Any] = {}
    conflicts: set[str] = set()
    for spec in payload.fields:
        if spec.is_list:
            union: list[Any] = []
            for annotation in usable:
                for item in annotation.values.get(spec.name) or []:
                    if item not in union:
                        union.append(item)
            values[spec.name] = union or None
        else:
            non_null = [
                annotation.values.get(spec.name)
                for annotation in usable
                if annotation.values.get(spec.name) is not None
            ]
            distinct = list(dict.fromkeys(non_null))
            if len(distinct) == 1:
                values[spec.name] = distinct[0]
            else:
                values[spec.name] = None
                if len(distinct) > 1:
                    conflicts.add(spec.name)
    return values, conflicts


def annotation(unit_id: str, values: dict[str, Any], status: str = "ok") -> UnitAnnotation:
    return UnitAnnotation(
        parent=KEY,
        unit_id=unit_id,
        payload_id=POPULATION.id,
        values=values,
        status=status,
        error="synthetic failure" if status == "failed" else None,
    )


# -- explicit examples ---------------------------------------------------------


def test_unanimous_scalar_survives() -> None:
    merged = merge_payload(
        POPULATION,
        [
            annotation(chunk_unit_id(KEY, 0, 8), {"total_patients_measured": 120}),
            annotation(chunk_unit_id(KEY, 8, 16), {"total_patients_measured": 120}),
        ],
    )
    assert merged.values["total_patients_measured"] == 120
    assert merged.conflicts == []


def test_conflicting_scalar_is_nulled_and_flagged_with_provenance() -> None:
    merged = merge_payload(
        POPULATION,
        [
            annotation(chunk_unit_id(KEY, 8, 16), {"total_patients_measured": 200}),
            annotation(chunk_unit_id(KEY, 0, 8), {"total_patients_measured": 120}),
        ],
    )
    assert merged.values["total_patients_measured"] is None
    (flag,) = merged.conflicts
    assert flag.payload_id == POPULATION.id
    assert flag.field == "total_patients_measured"
    # observed pairs are (value, first unit that reported it) in document order
    assert flag.observed == (
        (120, f"{KEY}:p0-8"),
        (200, f"{KEY}:p8-16"),
    )


def test_list_union_keeps_first_appearance_order() -> None:
    merged = merge_payload(
        POPULATION,
        [
            annotation(
                chunk_unit_id(KEY, 0, 8), {"doac_molecules": ["rivaroxaban", "apixaban"]}
            ),
            annotation(
                chunk_unit_id(KEY, 8, 16), {"doac_molecules": ["apixaban", "edoxaban"]}
            ),
        ],
    )
    assert merged.values["doac_molecules"] == ["rivaroxaban", "apixaban", "edoxaban"]


def test_caption_units_merge_after_all_chunks() -> None:
    merged = merge_payload(
        POPULATION,
        [
            annotation(caption_unit_id(KEY, 0, 0), {"doac_molecules": ["edoxaban"]}),
            annotation(chunk_unit_id(KEY, 8, 16), {"doac_molecules": ["apixaban"]}),
            annotation(chunk_unit_id(KEY, 0, 8), {"doac_molecules": ["rivaroxaban"]}),
        ],
    )
    assert merged.values["doac_molecules"] == ["rivaroxaban", "apixaban", "edoxaban"]


def test_failed_units_are_excluded_from_merge() -> None:
    merged = merge_payload(
        POPULATION,
        [
            annotation(chunk_unit_id(KEY, 0, 8), {"total_patients_measured": 120}),
            annotation(
                chunk_unit_id(KEY, 8, 16),
                {"total_patients_measured": 999},
                status="failed",
            ),
        ],
    )
    assert merged.values["total_patients_measured"] == 120
    assert merged.conflicts == []


def test_evidence_map_mirrors_evidence_fields() -> None:
    merged = merge_payload(
        POPULATION,
        [
            annotation(
                chunk_unit_id(KEY, 0, 8),
                {"population_evidence": ["sentence one.", "sentence two."]},
            ),
            annotation(
                chunk_unit_id(KEY, 8, 16),
                {"population_evidence": ["sentence two.", "sentence three."]},
            ),
        ],
    )
    assert merged.evidence == {
        "population_evidence": ["sentence one.", "sentence two.", "sentence three."]
    }


def test_merge_rejects_foreign_payloads_and_parents() -> None:
    foreign = UnitAnnotation(
        parent=KEY, unit_id=chunk_unit_id(KEY, 0, 8), payload_id="methods"
    )
    with pytest.raises(ValueError):
        merge_payload(POPULATION, [foreign])
    other_parent = UnitAnnotation(
        parent="b" * 40,
        unit_id=chunk_unit_id("b" * 40, 0, 8),
        payload_id=POPULATION.id,
    )
    ours = annotation(chunk_unit_id(KEY, 0, 8), {})
    with pytest.raises(ValueError):
        merge_payload(POPULATION, [ours, other_parent])


def test_integrate_flags_review_on_conflict_or_failure() -> None:
    def record_for(annotations, failed=()):
        merged = {
            payload.id: merge_payload(
                payload,
                [
                    UnitAnnotation(
                        parent=KEY,
                        unit_id=a.unit_id,
                        payload_id=payload.id,
                        values=a.values if payload.id == POPULATION.id else {},
                        status=a.status,
                        error=a.error,
                    )
                    for a in annotations
                ],
            )
            for payload in SCHEMA.payloads
        }
        return integrate_payloads(merged, KEY, SCHEMA.payload_ids, failed)

    clean = record_for([annotation(chunk_unit_id(KEY, 0, 8), {"doac_molecules": ["apixaban"]})])
    assert not clean.review_needed
    assert clean.failed_units == ()

    conflicted = record_for(
        [
            annotation(chunk_unit_id(KEY, 0, 8), {"total_patients_measured": 1}),
            annotation(chunk_unit_id(KEY, 8, 16), {"total_patients_measured": 2}),
        ]
    )
    assert conflicted.review_needed
    assert conflicted.conflicts

    failed = record_for(
        [annotation(chunk_unit_id(KEY, 0, 8), {})],
        failed=[f"{KEY}:p8-16", f"{KEY}:p0-8"],
    )
    assert failed.review_needed
    assert failed.failed_units == (f"{KEY}:p0-8", f"{KEY}:p8-16")  # sorted, deduped


def test_integrate_requires_every_payload() -> None:
    merged = {POPULATION.id: merge_payload(POPULATION, [])}
    with pytest.raises(ValueError):
        integrate_payloads(merged, KEY, SCHEMA.payload_ids)


# -- randomized fixtures against the oracle ---------------------------------------


def random_annotations(rng: random.Random) -> list[UnitAnnotation]:
    count = rng.randint(1, 5)
    annotations = []
    for index in range(count):
        if rng.random() < 0.7:
            unit_id = chunk_unit_id(KEY, index * 8, index * 8 + 8)
        else:
            unit_id = caption_unit_id(KEY, index, 0)
        values: dict[str, Any] = {}
        if rng.random() < 0.7:
            values["total_patients_measured"] = rng.choice([None, 100, 200, 300])
        if rng.random() < 0.7:
            size = rng.randint(0, 3)
            values["doac_molecules"] = rng.sample(MOLECULES, size) or None
        if rng.random() < 0.5:
            size = rng.randint(0, 3)
            values["population_evidence"] = rng.sample(SENTENCES, size) or None
        status = "failed" if rng.random() < 0.15 else "ok"
        annotations.append(annotation(unit_id, values, status))
    return annotations


def test_matches_oracle_on_three_thousand_random_fixtures() -> None:
    rng = random.Random(2024)
    for _ in range(3000):
        annotations = random_annotations(rng)
        merged = merge_payload(POPULATION, annotations)
        expected_values, expected_conflicts = oracle_merge(POPULATION, annotations)
        assert merged.values == expected_values
        assert {flag.field for flag in merged.conflicts} == expected_conflicts


# -- algebraic laws (hypothesis) ----------------------------------------------------


@st.composite
def annotation_lists(draw):
    count = draw(st.integers(min_value=1, max_value=5))
    annotations = []
    for index in range(count):
        kind = draw(st.sampled_from(["chunk", "caption"]))
        unit_id = (
            chunk_unit_id(KEY, index * 8, index * 8 + 8)
            if kind == "chunk"
            else caption_unit_id(KEY, index, 0)
        )
        values: dict[str, Any] = {}
        if draw(st.booleans()):
            values["total_patients_measured"] = draw(
                st.sampled_from([None, 100, 200, 300])
            )
        if draw(st.booleans()):
            values["doac_molecules"] = (
                draw(
                    st.lists(st.sampled_from(MOLECULES), max_size=3, unique=True)
                )
                or None
            )
        status = draw(st.sampled_from(["ok", "ok", "ok", "failed"]))
        annotations.append(annotation(unit_id, values, status))
    return annotations


@given(annotation_lists(), st.randoms(use_true_random=False))
@settings(max_examples=200)
def test_merge_is_input_order_invariant(annotations, rng) -> None:
    baseline = merge_payload(POPULATION, annotations)
    shuffled = list(annotations)
    rng.shuffle(shuffled)
    assert merge_payload(POPULATION, shuffled) == baseline


@given(annotation_lists())
@settings(max_examples=200)
def test_merge_is_idempotent_under_duplication(annotations) -> None:
    baseline = merge_payload(POPULATION, annotations)
    assert merge_payload(POPULATION, annotations + annotations) == baseline


@given(annotation_lists())
@settings(max_examples=200)
def test_all_null_fields_stay_null_without_conflict(annotations) -> None:
    merged = merge_payload(POPULATION, annotations)
    conflicted = {flag.field for flag in merged.conflicts}
    for spec in POPULATION.fields:
        supplied = any(
            a.status == "ok" and a.values.get(spec.name) for a in annotations
        )
        if not supplied:
            assert merged.values[spec.name] is None
            assert spec.name not in conflicted


@given(annotation_lists())
@settings(max_examples=200)
def test_adding_an_agreeing_unit_changes_nothing(annotations) -> None:
    baseline = merge_payload(POPULATION, annotations)
    echo = annotation(
        chunk_unit_id(KEY, 960, 968),
        {
            name: value
            for name, value in baseline.values.items()
            if value is not None and not POPULATION.field_spec(name).is_list
        },
    )
    extended = merge_payload(POPULATION, annotations + [echo])
    assert extended.values == baseline.values
    assert {f.field for f in extended.conflicts} == {
        f.field for f in baseline.conflicts
    }


@given(annotation_lists())
@settings(max_examples=200)
def test_adding_a_unit_never_shrinks_list_unions(annotations) -> None:
    baseline = merge_payload(POPULATION, annotations)
    # a caption with a huge page number sorts after every existing unit, so
    # the established first-appearance order must be a strict prefix
    extra = annotation(
        caption_unit_id(KEY, 10**6, 0), {"doac_molecules": ["betrixaban"]}
    )
    extended = merge_payload(POPULATION, annotations + [extra])
    before = baseline.values["doac_molecules"] or []
    after = extended.values["doac_molecules"] or []
    assert set(before) <= set(after)
    assert after[: len(before)] == before
    assert "betrixaban" in after
