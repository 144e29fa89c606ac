"""Reproducible export artifacts: study table, markdown, aggregates.

The study table is one CSV row per document in processing order, with one
column per schema field.  List values are joined with ``|`` and evidence
sentences with a pilcrow so verbatim prose that itself contains separators
survives a round trip (items are backslash-escaped).  All aggregate tables
are derived by re-reading the study table, so regenerating them offline
yields byte-identical files.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .backend import ImageObject, UnitAnnotation
from .errors import ConfigurationError, SchemaVersionError
from .merging import StudyRecord
from .schema import (
    FIXED_COLUMNS,
    SchemaSet,
    column_kinds,
    derive_columns,
)

logger = logging.getLogger(__name__)

LIST_SEPARATOR = "|"
EVIDENCE_SEPARATOR = "¶"  # pilcrow
CONFLICT_SEPARATOR = ";"

_IMAGE_PLACEHOLDER = re.compile(r"!\[img-[^\]]*\]\(img-[^)]*\)")


def escape_item(text: str, separator: str) -> str:
    return text.replace("\\", "\\\\").replace(separator, "\\" + separator)


def unescape_item(text: str, separator: str) -> str:
    return text.replace("\\" + separator, separator).replace("\\\\", "\\")


def join_items(items: Iterable[str], separator: str) -> str:
    return separator.join(escape_item(item, separator) for item in items)


def split_items(text: str, separator: str) -> list[str]:
    """Split on unescaped separators, then unescape each item."""
    items: list[str] = []
    current: list[str] = []
    i = 0
    while i < len(text):
        char = text[i]
        if char == "\\" and i + 1 < len(text):
            current.append(char)
            current.append(text[i + 1])
            i += 2
            continue
        if char == separator:
            items.append("".join(current))
            current = []
        else:
            current.append(char)
        i += 1
    items.append("".join(current))
    return [unescape_item(item, separator) for item in items]


def _scalar_to_str(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_cell(value: Any, kind: str) -> str:
    if value is None:
        return ""
    if kind == "evidence_text":
        return join_items([str(v) for v in value], EVIDENCE_SEPARATOR)
    if kind in ("list_of_enum", "list_of_text"):
        return join_items([str(v) for v in value], LIST_SEPARATOR)
    return _scalar_to_str(value)


def parse_cell(text: str, kind: str) -> Any:
    if text == "":
        return None
    if kind == "integer":
        return int(text)
    if kind == "real":
        return float(text)
    if kind == "evidence_text":
        return split_items(text, EVIDENCE_SEPARATOR)
    if kind in ("list_of_enum", "list_of_text"):
        return split_items(text, LIST_SEPARATOR)
    return text


def serialize_conflicts(record: StudyRecord, schema_set: SchemaSet) -> str:
    """``payload.field{a|b}`` per conflicted scalar, schema order, ;-joined."""
    kinds = column_kinds(schema_set)
    parts: list[str] = []
    for payload in schema_set.payloads:
        merged = record.payloads.get(payload.id)
        if merged is None:
            continue
        by_field = {flag.field: flag for flag in merged.conflicts}
        for spec in payload.fields:
            flag = by_field.get(spec.name)
            if flag is None:
                continue
            rendered = "|".join(
                v.replace("\\", "\\\\").replace("|", "\\|").replace(";", "\\;")
                for v in (_scalar_to_str(value) for value, _ in flag.observed)
            )
            parts.append(f"{payload.id}.{spec.name}{{{rendered}}}")
    return CONFLICT_SEPARATOR.join(parts)


def record_to_row(record: StudyRecord, schema_set: SchemaSet) -> dict[str, Any]:
    """Flatten a study record into the typed column space of the table."""
    row: dict[str, Any] = {
        "source_key": record.key,
        "conflict_flags": serialize_conflicts(record, schema_set),
    }
    for payload in schema_set.payloads:
        merged = record.payloads[payload.id]
        for spec in payload.fields:
            row[f"{payload.id}.{spec.name}"] = merged.values.get(spec.name)
    return row


class StudyTableWriter:
    """Append-only CSV study table with schema-derived header.

    Opening an existing table under a different column layout raises
    :class:`SchemaVersionError`; appending an already-present source key is
    a no-op, which makes per-document exports idempotent across resumes.
    """

    def __init__(self, path: str | Path, schema_set: SchemaSet) -> None:
        self.path = Path(path)
        self.columns = derive_columns(schema_set)
        self._kinds = column_kinds(schema_set)
        self._keys: set[str] = set()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8", newline="") as handle:
                reader = csv.reader(handle)
                header = next(reader, None)
                if header != self.columns:
                    raise SchemaVersionError(
                        f"study table {self.path} was written under a different schema"
                    )
                for row in reader:
                    if row:
                        self._keys.add(row[0])
        else:
            with open(self.path, "w", encoding="utf-8", newline="") as handle:
                csv.writer(handle).writerow(self.columns)

    def __contains__(self, key: str) -> bool:
        return key in self._keys

    def append(self, row: Mapping[str, Any]) -> bool:
        """Serialize and append one row; returns False for duplicate keys."""
        key = str(row["source_key"])
        if key in self._keys:
            return False
        cells = []
        for column in self.columns:
            if column in FIXED_COLUMNS:
                cells.append(str(row.get(column, "")))
            else:
                cells.append(serialize_cell(row.get(column), self._kinds[column]))
        with open(self.path, "a", encoding="utf-8", newline="") as handle:
            csv.writer(handle).writerow(cells)
        self._keys.add(key)
        return True

    def append_record(self, record: StudyRecord, schema_set: SchemaSet) -> bool:
        return self.append(record_to_row(record, schema_set))


def read_table(path: str | Path, schema_set: SchemaSet) -> list[dict[str, Any]]:
    """Parse the study table back into typed rows."""
    columns = derive_columns(schema_set)
    kinds = column_kinds(schema_set)
    rows: list[dict[str, Any]] = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != columns:
            raise SchemaVersionError(f"study table {path} was written under a different schema")
        for raw in reader:
            if not raw:
                continue
            row: dict[str, Any] = {}
            for column, cell in zip(columns, raw):
                if column in FIXED_COLUMNS:
                    row[column] = cell
                else:
                    row[column] = parse_cell(cell, kinds[column])
            rows.append(row)
    return rows


def write_parquet(csv_path: str | Path, parquet_path: str | Path, schema_set: SchemaSet) -> None:
    """Columnar copy of the study table with logically equal content.

    Cells keep their serialized string form; empty cells become nulls.
    """
    import pyarrow as pa
    import pyarrow.parquet as pq

    columns = derive_columns(schema_set)
    data: dict[str, list[str | None]] = {column: [] for column in columns}
    with open(csv_path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != columns:
            raise SchemaVersionError(f"study table {csv_path} was written under a different schema")
        for raw in reader:
            if not raw:
                continue
            for column, cell in zip(columns, raw):
                data[column].append(cell if cell != "" else None)
    table = pa.table({column: pa.array(data[column], type=pa.string()) for column in columns})
    pq.write_table(table, str(parquet_path))


# --------------------------------------------------------------------------
# Markdown reconstruction
# --------------------------------------------------------------------------


def pair_images_to_pages(annotation: UnitAnnotation) -> dict[int, list[ImageObject]]:
    """Attach a chunk annotation's images to pages by placeholder position."""
    images = list(annotation.images)
    by_page: dict[int, list[ImageObject]] = {}
    cursor = 0
    for page in sorted(annotation.page_markdowns):
        needed = len(_IMAGE_PLACEHOLDER.findall(annotation.page_markdowns[page]))
        if needed:
            by_page[page] = images[cursor:cursor + needed]
            cursor += needed
    return by_page


def _embed_images(markdown: str, images: Sequence[ImageObject]) -> str:
    queue = list(images)

    def replace(match: re.Match[str]) -> str:
        if not queue:
            return match.group(0)
        image = queue.pop(0)
        return (
            f"![{image.description}](data:image/png;base64,{image.image_base64})\n\n"
            f"*{image.region_type}: {image.description}*"
        )

    rendered = _IMAGE_PLACEHOLDER.sub(replace, markdown)
    for image in queue:  # images without a matching placeholder
        rendered += (
            f"\n\n![{image.description}](data:image/png;base64,{image.image_base64})\n\n"
            f"*{image.region_type}: {image.description}*"
        )
    return rendered


def render_markdown(
    record: StudyRecord,
    schema_set: SchemaSet,
    page_count: int,
    page_markdowns: Mapping[int, str],
    images_by_page: Mapping[int, Sequence[ImageObject]] | None = None,
) -> str:
    """Single markdown document: annotation header, then page reconstructions.

    The header lists every non-null field (bolded) grouped by payload, with
    evidence sentences as sub-bullets.  Pages the backend never returned are
    kept as explicit placeholders so the page numbering stays faithful.
    """
    images_by_page = images_by_page or {}
    lines: list[str] = [f"# Study {record.key}", ""]
    lines.append(f"Review needed: {'yes' if record.review_needed else 'no'}")
    if record.failed_units:
        lines.append(f"Failed units: {', '.join(record.failed_units)}")
    flags = serialize_conflicts(record, schema_set)
    if flags:
        lines.append(f"Conflicts: {flags}")
    lines += ["", "## Structured annotations", ""]
    for payload in schema_set.payloads:
        merged = record.payloads[payload.id]
        populated = [
            spec for spec in payload.fields if merged.values.get(spec.name) is not None
        ]
        if not populated:
            continue
        lines.append(f"### {payload.title}")
        lines.append("")
        for spec in populated:
            value = merged.values[spec.name]
            if spec.kind == "evidence_text":
                lines.append(f"- **{spec.name}**:")
                for sentence in value:
                    lines.append(f"  - {sentence}")
            elif spec.is_list:
                lines.append(f"- **{spec.name}**: {', '.join(str(v) for v in value)}")
            else:
                lines.append(f"- **{spec.name}**: {value}")
        lines.append("")
    lines += ["## Page reconstructions", ""]
    for page in range(page_count):
        lines.append(f"### Page {page + 1}")
        lines.append("")
        markdown = page_markdowns.get(page)
        if markdown is None:
            lines.append(f"[page {page + 1} unavailable]")
        else:
            lines.append(_embed_images(markdown, images_by_page.get(page, ())))
        lines.append("")
    return "\n".join(lines).rstrip("\n") + "\n"


# --------------------------------------------------------------------------
# Aggregates
# --------------------------------------------------------------------------

CHART_MIN_COUNT = 4  # chart tables keep values occurring more than 3 times


@dataclass
class FrequencyTable:
    column: str
    entries: list[tuple[str, int]]  # (value, count), count desc then value asc
    studies_with_value: int


def _row_values(row: Mapping[str, Any], column: str, kind: str) -> list[str]:
    value = row.get(column)
    if value is None:
        return []
    if kind in ("list_of_enum", "list_of_text", "evidence_text"):
        return [str(v) for v in value]
    return [_scalar_to_str(value)]


def frequency_tables(
    rows: Sequence[Mapping[str, Any]], schema_set: SchemaSet
) -> dict[str, FrequencyTable]:
    """Value frequencies per schema column; scalar counts sum to the number
    of studies reporting the field, list counts are per distinct element."""
    kinds = column_kinds(schema_set)
    tables: dict[str, FrequencyTable] = {}
    for column, kind in kinds.items():
        counts: dict[str, int] = {}
        studies = 0
        for row in rows:
            values = _row_values(row, column, kind)
            if not values:
                continue
            studies += 1
            for value in values:
                counts[value] = counts.get(value, 0) + 1
        entries = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
        tables[column] = FrequencyTable(column=column, entries=entries, studies_with_value=studies)
    return tables


def missingness_matrix(
    rows: Sequence[Mapping[str, Any]], schema_set: SchemaSet
) -> tuple[list[str], list[list[Any]]]:
    """Per-study 0/1 missingness flags, one column per schema field."""
    columns = [c for c in derive_columns(schema_set) if c not in FIXED_COLUMNS]
    header = ["source_key"] + columns
    matrix: list[list[Any]] = []
    for row in rows:
        flags = [0 if row.get(column) is not None else 1 for column in columns]
        matrix.append([row.get("source_key", "")] + flags)
    return header, matrix


def completeness_summary(
    rows: Sequence[Mapping[str, Any]], schema_set: SchemaSet
) -> list[tuple[str, str, float]]:
    """(scope, name, share in percent) per payload and per field.

    Payload completeness counts studies with at least one non-null field in
    the payload; field completeness counts studies with the field non-null.
    """
    total = len(rows)
    summary: list[tuple[str, str, float]] = []

    def share(count: int) -> float:
        return 100.0 * count / total if total else 0.0

    for payload in schema_set.payloads:
        columns = [f"{payload.id}.{spec.name}" for spec in payload.fields]
        count = sum(
            1 for row in rows if any(row.get(column) is not None for column in columns)
        )
        summary.append(("payload", payload.id, share(count)))
    for payload in schema_set.payloads:
        for spec in payload.fields:
            column = f"{payload.id}.{spec.name}"
            count = sum(1 for row in rows if row.get(column) is not None)
            summary.append(("field", column, share(count)))
    return summary


def composite_stratification(
    rows: Sequence[Mapping[str, Any]],
    schema_set: SchemaSet,
    column_a: str,
    column_b: str,
) -> list[tuple[str, str, int]]:
    """Cross-tabulated (value_a, value_b) counts across studies.

    A study contributes the Cartesian product of its two value sets; scalars
    act as single-element sets and nulls contribute nothing.
    """
    kinds = column_kinds(schema_set)
    for column in (column_a, column_b):
        if column not in kinds:
            raise ConfigurationError(f"unknown stratification field {column!r}")
    counts: dict[tuple[str, str], int] = {}
    for row in rows:
        for a in _row_values(row, column_a, kinds[column_a]):
            for b in _row_values(row, column_b, kinds[column_b]):
                counts[(a, b)] = counts.get((a, b), 0) + 1
    ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [(a, b, count) for (a, b), count in ordered]


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def write_columns_txt(schema_set: SchemaSet, path: str | Path) -> None:
    Path(path).write_text("\n".join(derive_columns(schema_set)) + "\n", encoding="utf-8")


def export_corpus_tables(
    out_dir: str | Path,
    schema_set: SchemaSet,
    *,
    strata: Sequence[tuple[str, str]] = (),
    charts: bool = False,
) -> dict[str, FrequencyTable]:
    """Regenerate every aggregate artifact from the study table on disk.

    Both the in-run export and the offline aggregation command go through
    this function, so the two always produce identical bytes.
    """
    out_dir = Path(out_dir)
    csv_path = out_dir / "studies.csv"
    if not csv_path.exists():
        raise ConfigurationError(f"no study table at {csv_path}")
    rows = read_table(csv_path, schema_set)
    write_parquet(csv_path, out_dir / "studies.parquet", schema_set)
    write_columns_txt(schema_set, out_dir / "columns.txt")

    aggregates_dir = out_dir / "aggregates"
    aggregates_dir.mkdir(parents=True, exist_ok=True)
    files: list[str] = []

    tables = frequency_tables(rows, schema_set)
    for column, table in tables.items():
        _write_csv(aggregates_dir / f"{column}.csv", ["value", "count"], table.entries)
        files.append(f"{column}.csv")
        chart_entries = [(v, c) for v, c in table.entries if c >= CHART_MIN_COUNT]
        chart_path = aggregates_dir / "chart_data" / f"{column}.csv"
        _write_csv(chart_path, ["value", "count"], chart_entries)
        files.append(f"chart_data/{column}.csv")

    header, matrix = missingness_matrix(rows, schema_set)
    _write_csv(aggregates_dir / "missingness.csv", header, matrix)
    files.append("missingness.csv")

    summary = completeness_summary(rows, schema_set)
    _write_csv(
        aggregates_dir / "completeness.csv",
        ["scope", "name", "completeness_pct"],
        [(scope, name, f"{share:.1f}") for scope, name, share in summary],
    )
    files.append("completeness.csv")

    for column_a, column_b in strata:
        entries = composite_stratification(rows, schema_set, column_a, column_b)
        path = aggregates_dir / f"strata.{column_a}__{column_b}.csv"
        _write_csv(path, [column_a, column_b, "count"], entries)
        files.append(path.name)

    manifest = {
        "schema_version": schema_set.version,
        "study_count": len(rows),
        "files": sorted(files),
    }
    (aggregates_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    if charts:
        _render_charts(aggregates_dir / "chart_data")
    return tables


def _render_charts(chart_dir: Path) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logger.warning("matplotlib not installed; skipping chart rendering")
        return
    for csv_file in sorted(chart_dir.glob("*.csv")):
        with open(csv_file, "r", encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            next(reader, None)
            entries = [(row[0], int(row[1])) for row in reader if row]
        if not entries:
            continue
        labels = [value for value, _ in entries]
        counts = [count for _, count in entries]
        fig, ax = plt.subplots(figsize=(8, max(2, 0.4 * len(labels))))
        ax.barh(range(len(labels)), counts)
        ax.set_yticks(range(len(labels)))
        ax.set_yticklabels(labels, fontsize=7)
        ax.invert_yaxis()
        ax.set_xlabel("studies")
        ax.set_title(csv_file.stem, fontsize=9)
        fig.tight_layout()
        fig.savefig(csv_file.with_suffix(".png"), dpi=120)
        plt.close(fig)
