"""Extraction schema: payload definitions, the validation gate, column layout.

A schema file defines five payload groups.  Each payload is a named set of
typed, nullable fields; enum fields carry a closed vocabulary with optional
aliases, and decision fields name an ``evidence_text`` partner that holds the
verbatim sentences supporting them.  Every backend response passes through
:func:`validate_annotation` before it reaches the rest of the pipeline, so
downstream code only ever sees typed, vocabulary-clean values.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from .errors import SchemaDefinitionError

FIELD_KINDS = frozenset(
    {"integer", "real", "text", "enum", "list_of_enum", "list_of_text", "evidence_text"}
)
LIST_KINDS = frozenset({"list_of_enum", "list_of_text", "evidence_text"})
ENUM_KINDS = frozenset({"enum", "list_of_enum"})

# the pipeline's accounting (units x payloads) presumes exactly these groups
REQUIRED_PAYLOAD_IDS = (
    "meta_design",
    "population_indications",
    "methods",
    "outcomes",
    "diagnostic_performance",
)

FIXED_COLUMNS = ("source_key", "conflict_flags")


def canonical_text(value: str) -> str:
    """Composition-normalised, trimmed text; the pipeline's value space."""
    return unicodedata.normalize("NFC", value).strip()


@dataclass(frozen=True)
class SanityRule:
    """Plausibility bounds or pattern for a numeric or text field."""

    minimum: float | None = None
    maximum: float | None = None
    pattern: str | None = None

    def check(self, value: Any) -> bool:
        if self.pattern is not None:
            return bool(re.fullmatch(self.pattern, str(value)))
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return False
        if self.minimum is not None and value < self.minimum:
            return False
        if self.maximum is not None and value > self.maximum:
            return False
        return True


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str
    description: str = ""
    vocabulary: tuple[str, ...] = ()
    aliases: Mapping[str, str] = field(default_factory=dict)
    evidence_partner: str | None = None
    sanity: SanityRule | None = None

    @property
    def is_list(self) -> bool:
        return self.kind in LIST_KINDS


@dataclass(frozen=True)
class PayloadSchema:
    id: str
    title: str
    fields: tuple[FieldSpec, ...]

    def __post_init__(self) -> None:
        names = [f.name for f in self.fields]
        if len(names) != len(set(names)):
            raise SchemaDefinitionError(f"payload {self.id!r} has duplicate field names")
        by_name = {f.name: f for f in self.fields}
        for spec in self.fields:
            if spec.kind not in FIELD_KINDS:
                raise SchemaDefinitionError(
                    f"field {self.id}.{spec.name} has unknown kind {spec.kind!r}"
                )
            if spec.kind in ENUM_KINDS and not spec.vocabulary:
                raise SchemaDefinitionError(
                    f"field {self.id}.{spec.name} is {spec.kind} but has no vocabulary"
                )
            if spec.kind not in ENUM_KINDS and spec.vocabulary:
                raise SchemaDefinitionError(
                    f"field {self.id}.{spec.name} is {spec.kind} but carries a vocabulary"
                )
            if spec.evidence_partner is not None:
                partner = by_name.get(spec.evidence_partner)
                if partner is None:
                    raise SchemaDefinitionError(
                        f"field {self.id}.{spec.name} names missing evidence"
                        f" partner {spec.evidence_partner!r}"
                    )
                if partner.kind != "evidence_text":
                    raise SchemaDefinitionError(
                        f"evidence partner {self.id}.{spec.evidence_partner}"
                        f" must be evidence_text, not {partner.kind}"
                    )

    def field_spec(self, name: str) -> FieldSpec:
        for spec in self.fields:
            if spec.name == name:
                return spec
        raise KeyError(name)

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)


@dataclass(frozen=True)
class SchemaSet:
    """All payload schemas of one schema version, in declaration order."""

    version: str
    payloads: tuple[PayloadSchema, ...]

    def __post_init__(self) -> None:
        if not self.version:
            raise SchemaDefinitionError("schema version must be non-empty")
        ids = [p.id for p in self.payloads]
        if len(ids) != len(set(ids)):
            raise SchemaDefinitionError("duplicate payload ids")

    def payload(self, payload_id: str) -> PayloadSchema:
        for payload in self.payloads:
            if payload.id == payload_id:
                return payload
        raise KeyError(payload_id)

    @property
    def payload_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.payloads)


def _parse_vocabulary(
    payload_id: str, name: str, entries: Sequence[Any]
) -> tuple[tuple[str, ...], dict[str, str]]:
    labels: list[str] = []
    aliases: dict[str, str] = {}
    for entry in entries:
        if isinstance(entry, str):
            label, entry_aliases = canonical_text(entry), []
        elif isinstance(entry, dict) and "label" in entry:
            label = canonical_text(str(entry["label"]))
            entry_aliases = [canonical_text(str(a)) for a in entry.get("aliases", [])]
        else:
            raise SchemaDefinitionError(
                f"field {payload_id}.{name}: vocabulary entries must be strings"
                " or mappings with a label"
            )
        if not label:
            raise SchemaDefinitionError(f"field {payload_id}.{name}: empty vocabulary label")
        if label in labels:
            raise SchemaDefinitionError(
                f"field {payload_id}.{name}: duplicate vocabulary label {label!r}"
            )
        labels.append(label)
        for alias in entry_aliases:
            if not alias or alias in aliases:
                raise SchemaDefinitionError(
                    f"field {payload_id}.{name}: empty or duplicate alias {alias!r}"
                )
            aliases[alias] = label
    for alias in aliases:
        if alias in labels:
            raise SchemaDefinitionError(
                f"field {payload_id}.{name}: alias {alias!r} shadows a label"
            )
    return tuple(labels), aliases


def _parse_field(payload_id: str, raw: Mapping[str, Any]) -> FieldSpec:
    try:
        name = str(raw["name"])
        kind = str(raw["kind"])
    except KeyError as exc:
        raise SchemaDefinitionError(
            f"payload {payload_id!r}: field missing required key {exc}"
        ) from None
    vocabulary: tuple[str, ...] = ()
    aliases: dict[str, str] = {}
    if "vocabulary" in raw:
        vocabulary, aliases = _parse_vocabulary(payload_id, name, raw["vocabulary"])
    sanity = None
    if "sanity" in raw:
        rule = raw["sanity"]
        if not isinstance(rule, dict):
            raise SchemaDefinitionError(f"field {payload_id}.{name}: sanity must be a mapping")
        sanity = SanityRule(
            minimum=rule.get("min"),
            maximum=rule.get("max"),
            pattern=rule.get("pattern"),
        )
    return FieldSpec(
        name=name,
        kind=kind,
        description=str(raw.get("description", "")).strip(),
        vocabulary=vocabulary,
        aliases=aliases,
        evidence_partner=raw.get("evidence"),
        sanity=sanity,
    )


def bundled_schema_path(name: str) -> Path:
    return Path(str(resources.files("evidencepipe") / "schemas" / f"{name}.yaml"))


def load_schema_set(source: str | Path = "doac.v1") -> SchemaSet:
    """Load and validate a schema file; ``source`` is a path or a bundled name."""
    path = Path(source)
    if not path.exists():
        candidate = bundled_schema_path(str(source))
        if not candidate.exists():
            raise SchemaDefinitionError(f"schema {source!r} not found")
        path = candidate
    with open(path, "r", encoding="utf-8") as handle:
        data = yaml.safe_load(handle)
    if not isinstance(data, dict) or "version" not in data or "payloads" not in data:
        raise SchemaDefinitionError(f"schema file {path} must define version and payloads")
    payloads = tuple(
        PayloadSchema(
            id=str(raw["id"]),
            title=str(raw.get("title", raw["id"])),
            fields=tuple(_parse_field(str(raw["id"]), f) for f in raw.get("fields", [])),
        )
        for raw in data["payloads"]
    )
    schema_set = SchemaSet(version=str(data["version"]), payloads=payloads)
    if set(schema_set.payload_ids) != set(REQUIRED_PAYLOAD_IDS):
        raise SchemaDefinitionError(
            "schema must define exactly the payloads "
            f"{sorted(REQUIRED_PAYLOAD_IDS)}, got {sorted(schema_set.payload_ids)}"
        )
    return schema_set


@dataclass(frozen=True)
class Violation:
    field: str
    code: str  # "type" or "vocabulary"
    detail: str


@dataclass
class ValidationOutcome:
    """Typed values plus a record of everything the gate had to reject."""

    values: dict[str, Any]
    violations: list[Violation]
    unknown_keys: list[str]
    conformance_ratio: float


def _coerce_scalar(spec: FieldSpec, raw: Any) -> tuple[Any, Violation | None]:
    if spec.kind == "integer":
        if isinstance(raw, bool):
            return None, Violation(spec.name, "type", "boolean is not an integer")
        if isinstance(raw, int):
            return raw, None
        if isinstance(raw, float) and raw.is_integer():
            return int(raw), None
        if isinstance(raw, str):
            try:
                return int(raw.strip()), None
            except ValueError:
                return None, Violation(spec.name, "type", f"not an integer: {raw!r}")
        return None, Violation(spec.name, "type", f"not an integer: {raw!r}")
    if spec.kind == "real":
        if isinstance(raw, bool):
            return None, Violation(spec.name, "type", "boolean is not a number")
        if isinstance(raw, (int, float)):
            value = float(raw)
        elif isinstance(raw, str):
            try:
                value = float(raw.strip())
            except ValueError:
                return None, Violation(spec.name, "type", f"not a number: {raw!r}")
        else:
            return None, Violation(spec.name, "type", f"not a number: {raw!r}")
        if value != value or value in (float("inf"), float("-inf")):
            return None, Violation(spec.name, "type", "non-finite number")
        return value, None
    if spec.kind == "text":
        if not isinstance(raw, str):
            return None, Violation(spec.name, "type", f"not text: {raw!r}")
        text = canonical_text(raw)
        return (text or None), None
    if spec.kind == "enum":
        if not isinstance(raw, str):
            return None, Violation(spec.name, "type", f"not an enum label: {raw!r}")
        label, violation = _resolve_label(spec, raw)
        return label, violation
    raise AssertionError(f"not a scalar kind: {spec.kind}")


def _resolve_label(spec: FieldSpec, raw: str) -> tuple[str | None, Violation | None]:
    candidate = canonical_text(raw)
    if candidate in spec.vocabulary:
        return candidate, None
    if candidate in spec.aliases:
        return spec.aliases[candidate], None
    return None, Violation(spec.name, "vocabulary", f"label not in vocabulary: {raw!r}")


def _coerce_list(spec: FieldSpec, raw: Any) -> tuple[list[Any] | None, list[Violation]]:
    if isinstance(raw, str):
        items: Sequence[Any] = [raw]
    elif isinstance(raw, (list, tuple)):
        items = list(raw)
    else:
        return None, [Violation(spec.name, "type", f"not a list: {raw!r}")]
    violations: list[Violation] = []
    resolved: list[Any] = []
    for item in items:
        if item is None:
            continue
        if not isinstance(item, str):
            violations.append(Violation(spec.name, "type", f"non-text element: {item!r}"))
            continue
        if spec.kind == "list_of_enum":
            label, violation = _resolve_label(spec, item)
            if violation is not None:
                violations.append(violation)
                continue
            value = label
        else:  # list_of_text, evidence_text
            value = canonical_text(item)
            if not value:
                continue
        if value not in resolved:
            resolved.append(value)
    return (resolved or None), violations


def validate_annotation(
    payload: PayloadSchema, raw: Mapping[str, Any] | None
) -> ValidationOutcome:
    """Coerce one raw backend response into the payload's typed value space.

    The outcome always carries every schema field (null where absent or
    rejected).  The conformance ratio is the share of fields present in the
    raw response that produced no violation; a response with no recognised
    fields is vacuously conformant.  Validating a validated output yields
    the same values and no violations.
    """
    raw = dict(raw or {})
    values: dict[str, Any] = {}
    violations: list[Violation] = []
    unknown_keys = sorted(k for k in raw if k not in payload.field_names)
    fields_present = 0
    fields_violating = 0
    for spec in payload.fields:
        if spec.name not in raw:
            values[spec.name] = None
            continue
        fields_present += 1
        item = raw[spec.name]
        if item is None:
            values[spec.name] = None
            continue
        if spec.is_list:
            value, item_violations = _coerce_list(spec, item)
            values[spec.name] = value
            violations.extend(item_violations)
            if item_violations:
                fields_violating += 1
        else:
            value, violation = _coerce_scalar(spec, item)
            values[spec.name] = value
            if violation is not None:
                violations.append(violation)
                fields_violating += 1
    ratio = 1.0 if fields_present == 0 else (fields_present - fields_violating) / fields_present
    return ValidationOutcome(
        values=values,
        violations=violations,
        unknown_keys=unknown_keys,
        conformance_ratio=ratio,
    )


def derive_columns(schema_set: SchemaSet) -> list[str]:
    """Flat column layout for tabular exports, a pure function of the schema."""
    columns = list(FIXED_COLUMNS)
    for payload in schema_set.payloads:
        for spec in payload.fields:
            columns.append(f"{payload.id}.{spec.name}")
    return columns


def column_kinds(schema_set: SchemaSet) -> dict[str, str]:
    """Field kind per payload column; fixed columns are not included."""
    kinds: dict[str, str] = {}
    for payload in schema_set.payloads:
        for spec in payload.fields:
            kinds[f"{payload.id}.{spec.name}"] = spec.kind
    return kinds


def sanity_rules(schema_set: SchemaSet) -> dict[str, SanityRule]:
    """Plausibility rules per column, for quality scoring."""
    rules: dict[str, SanityRule] = {}
    for payload in schema_set.payloads:
        for spec in payload.fields:
            if spec.sanity is not None:
                rules[f"{payload.id}.{spec.name}"] = spec.sanity
    return rules
