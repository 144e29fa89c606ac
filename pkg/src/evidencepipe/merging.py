"""Consolidation of per-unit annotations into one record per document.

Chunked annotation means several units may report the same field.  Scalars
merge only when every reporting unit agrees; disagreement nulls the field and
raises a conflict flag carrying each distinct value and the first unit that
produced it.  List fields take the order-preserving union across units in
document order, so first appearance is deterministic.  Failed units
contribute no values but are recorded on the study record.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .backend import UnitAnnotation
from .chunking import unit_sort_key
from .schema import PayloadSchema


@dataclass(frozen=True)
class ConflictFlag:
    """Disagreement between units on a scalar field.

    ``observed`` pairs each distinct value with the first unit reporting it,
    in document order, so reviewers can jump straight to the source pages.
    """

    payload_id: str
    field: str
    observed: tuple[tuple[Any, str], ...]


@dataclass
class MergedPayload:
    payload_id: str
    values: dict[str, Any]
    evidence: dict[str, list[str]] = field(default_factory=dict)
    conflicts: list[ConflictFlag] = field(default_factory=list)


@dataclass
class StudyRecord:
    """One consolidated, review-ready record per source document."""

    key: str
    payloads: dict[str, MergedPayload]
    review_needed: bool
    failed_units: tuple[str, ...] = ()

    @property
    def conflicts(self) -> list[ConflictFlag]:
        flags: list[ConflictFlag] = []
        for payload in self.payloads.values():
            flags.extend(payload.conflicts)
        return flags


def merge_payload(
    payload: PayloadSchema, annotations: Sequence[UnitAnnotation]
) -> MergedPayload:
    """Merge one payload's annotations across all units of one document."""
    for annotation in annotations:
        if annotation.payload_id != payload.id:
            raise ValueError(
                f"annotation {annotation.unit_id} carries payload"
                f" {annotation.payload_id!r}, expected {payload.id!r}"
            )
    parents = {a.parent for a in annotations}
    if len(parents) > 1:
        raise ValueError(f"annotations from multiple documents: {sorted(parents)}")

    ordered = sorted(annotations, key=lambda a: unit_sort_key(a.unit_id))
    usable = [a for a in ordered if a.status == "ok"]

    values: dict[str, Any] = {}
    conflicts: list[ConflictFlag] = []
    for spec in payload.fields:
        if spec.is_list:
            union: list[Any] = []
            for annotation in usable:
                for item in annotation.values.get(spec.name) or ():
                    if item not in union:
                        union.append(item)
            values[spec.name] = union or None
        else:
            observed: dict[Any, str] = {}
            for annotation in usable:
                value = annotation.values.get(spec.name)
                if value is None:
                    continue
                if value not in observed:
                    observed[value] = annotation.unit_id
            if len(observed) == 1:
                values[spec.name] = next(iter(observed))
            else:
                values[spec.name] = None
                if len(observed) > 1:
                    conflicts.append(
                        ConflictFlag(
                            payload_id=payload.id,
                            field=spec.name,
                            observed=tuple(observed.items()),
                        )
                    )
    evidence = {
        spec.name: list(values[spec.name])
        for spec in payload.fields
        if spec.kind == "evidence_text" and values.get(spec.name)
    }
    return MergedPayload(
        payload_id=payload.id, values=values, evidence=evidence, conflicts=conflicts
    )


def integrate_payloads(
    merged: Mapping[str, MergedPayload],
    key: str,
    payload_ids: Sequence[str],
    failed_units: Sequence[str] = (),
) -> StudyRecord:
    """Assemble the per-payload merges into one study record.

    The record needs review when any field conflicted or any unit failed.
    """
    if set(merged) != set(payload_ids):
        raise ValueError(
            f"expected payloads {sorted(payload_ids)}, got {sorted(merged)}"
        )
    has_conflicts = any(merged[p].conflicts for p in payload_ids)
    ordered_failures = tuple(sorted(set(failed_units), key=unit_sort_key))
    return StudyRecord(
        key=key,
        payloads={p: merged[p] for p in payload_ids},
        review_needed=has_conflicts or bool(ordered_failures),
        failed_units=ordered_failures,
    )
