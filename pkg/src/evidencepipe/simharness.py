"""Synthetic corpus generation and declarative simulation scenarios.

The harness writes real (minimal, uncompressed) PDF files with known planted
facts, and a manifest recording exactly which values and evidence sentences
the pipeline must recover.  Plants become whole-line keyword rules for the
mock backend, so nothing can fire accidentally: a rule only matches the
exact planted line.  Scenarios bundle a corpus shape, run configuration,
latency model, fault schedule and assertions into one YAML document and run
entirely on the virtual clock.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from .backend import FaultSchedule, KeywordRule, LatencyModel, MATCH_LINE, MockBackend, MockStats
from .chunking import plan_page_chunks
from .clock import SimulatedClock, run_simulated
from .errors import ConfigurationError
from .ingest import ProcessedIndex, canonical_id, source_key
from .merging import StudyRecord
from .orchestrator import RetryPolicy, RunConfig, RunReport, run_corpus
from .schema import SchemaSet, load_schema_set

logger = logging.getLogger(__name__)

# --------------------------------------------------------------------------
# Minimal PDF writing
# --------------------------------------------------------------------------


def _escape_pdf_text(text: str) -> str:
    return text.replace("\\", r"\\").replace("(", r"\(").replace(")", r"\)")


def _content_stream(lines: Sequence[str]) -> bytes:
    parts = ["BT", "/F1 10 Tf", "14 TL", "72 760 Td"]
    for index, line in enumerate(lines):
        if index:
            parts.append("T*")
        parts.append(f"({_escape_pdf_text(line)}) Tj")
    parts.append("ET")
    return "\n".join(parts).encode("latin-1")


def write_minimal_pdf(pages: Sequence[Sequence[str]]) -> bytes:
    """A complete single-tree PDF with one uncompressed text stream per page."""
    if not pages:
        raise ConfigurationError("a document needs at least one page")
    objects: dict[int, bytes] = {}
    count = len(pages)
    kids = " ".join(f"{4 + 2 * i} 0 R" for i in range(count))
    objects[1] = b"<< /Type /Catalog /Pages 2 0 R >>"
    objects[2] = f"<< /Type /Pages /Kids [{kids}] /Count {count} >>".encode("ascii")
    objects[3] = b"<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica >>"
    for i, lines in enumerate(pages):
        page_obj = 4 + 2 * i
        content_obj = 5 + 2 * i
        stream = _content_stream(lines)
        objects[page_obj] = (
            f"<< /Type /Page /Parent 2 0 R /MediaBox [0 0 612 792] "
            f"/Resources << /Font << /F1 3 0 R >> >> /Contents {content_obj} 0 R >>"
        ).encode("ascii")
        objects[content_obj] = (
            f"<< /Length {len(stream)} >>\nstream\n".encode("ascii") + stream + b"\nendstream"
        )
    out = bytearray(b"%PDF-1.4\n")
    offsets: dict[int, int] = {}
    for number in sorted(objects):
        offsets[number] = len(out)
        out += f"{number} 0 obj\n".encode("ascii") + objects[number] + b"\nendobj\n"
    xref_at = len(out)
    size = max(objects) + 1
    out += f"xref\n0 {size}\n".encode("ascii")
    out += b"0000000000 65535 f \n"
    for number in range(1, size):
        out += f"{offsets[number]:010d} 00000 n \n".encode("ascii")
    out += f"trailer\n<< /Size {size} /Root 1 0 R >>\nstartxref\n{xref_at}\n%%EOF\n".encode(
        "ascii"
    )
    return bytes(out)


# --------------------------------------------------------------------------
# Corpus specification with planted ground truth
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldPlant:
    """One fact planted into a document.

    With ``caption_index`` unset the fact becomes a standalone sentence on
    ``page``; otherwise the triggering clause is embedded in that caption's
    text (and ``page`` is ignored).
    """

    payload_id: str
    field: str
    value: Any
    page: int = 0
    caption_index: int | None = None


@dataclass(frozen=True)
class CaptionPlant:
    page: int
    kind: str = "Figure"  # leading token: Figure | Fig. | Table | Supplementary Figure ...
    label: str = "1"
    text: str = "Overview of the measurement workflow"


@dataclass(frozen=True)
class DocSpec:
    name: str
    pages: int
    background_lines: int = 3
    captions: tuple[CaptionPlant, ...] = ()
    plants: tuple[FieldPlant, ...] = ()


@dataclass(frozen=True)
class CorpusSpec:
    docs: tuple[DocSpec, ...]
    seed: int = 0


# neutral vocabulary for background prose; never matches the caption grammar
# and never forms a planted line, so it cannot trigger any keyword rule
_BACKGROUND_WORDS = (
    "baseline", "clinical", "cohort", "plasma", "sampling", "protocol",
    "analysis", "laboratory", "patients", "follow", "values", "reported",
    "summary", "methods", "results", "repeated", "centre", "records",
)


def _background_line(rng: random.Random) -> str:
    words = [rng.choice(_BACKGROUND_WORDS) for _ in range(rng.randint(6, 12))]
    return " ".join(words).capitalize() + "."


def _plant_sentence(doc: DocSpec, plant: FieldPlant, ordinal: int) -> str:
    stem = Path(doc.name).stem
    noun = plant.field.replace("_", " ")
    return (
        f"For record {stem}-{ordinal} the {noun} was documented as"
        f" {plant.value} by the site team."
    )


def _plant_clause(plant: FieldPlant) -> str:
    noun = plant.field.replace("_", " ")
    return f"{noun} {plant.value}"


@dataclass
class DocManifest:
    """Ground truth for one generated document."""

    name: str
    canonical: str
    key: str
    pages: int
    captions: list[tuple[int, int, str]]  # (page, ordinal, caption line)
    expected_values: dict[str, dict[str, Any]]
    expected_evidence: dict[str, dict[str, list[str]]]
    expected_conflicts: list[tuple[str, str]]

    def chunk_count(self, pages_per_chunk: int) -> int:
        return len(plan_page_chunks(self.pages, pages_per_chunk))

    def unit_count(self, pages_per_chunk: int) -> int:
        return self.chunk_count(pages_per_chunk) + len(self.captions)


@dataclass
class CorpusManifest:
    seed: int
    docs: list[DocManifest]
    rules: list[KeywordRule]

    @property
    def total_pages(self) -> int:
        return sum(doc.pages for doc in self.docs)

    def total_chunks(self, pages_per_chunk: int) -> int:
        return sum(doc.chunk_count(pages_per_chunk) for doc in self.docs)

    @property
    def total_captions(self) -> int:
        return sum(len(doc.captions) for doc in self.docs)

    def expected_requests(
        self, pages_per_chunk: int, payload_count: int = 5, skip: Sequence[str] = ()
    ) -> int:
        skipped = set(skip)
        return payload_count * sum(
            doc.unit_count(pages_per_chunk) for doc in self.docs if doc.key not in skipped
        )


def _simulate_expected(
    page_lines: list[list[tuple[str, list[FieldPlant]]]],
    captions: list[tuple[int, int, str, list[FieldPlant]]],
    schema_set: SchemaSet,
    pages_per_chunk: int,
) -> tuple[dict, dict, list[tuple[str, str]]]:
    """Replay the unit decomposition and merge rules over the planted layout.

    Units see occurrences in text order; scalars keep the first value per
    unit and conflict when units disagree; lists and evidence union across
    units in document order with first-appearance dedup.
    """
    units: list[list[tuple[FieldPlant, str]]] = []
    for start, end in plan_page_chunks(len(page_lines), pages_per_chunk):
        occurrences: list[tuple[FieldPlant, str]] = []
        for page in range(start, end):
            for line, plants in page_lines[page]:
                for plant in plants:
                    occurrences.append((plant, line))
        units.append(occurrences)
    for _page, _ordinal, line, plants in captions:
        units.append([(plant, line) for plant in plants])

    values: dict[str, dict[str, Any]] = {}
    evidence: dict[str, dict[str, list[str]]] = {}
    conflicts: list[tuple[str, str]] = []
    for payload in schema_set.payloads:
        per_unit_scalar: dict[str, list[Any]] = {}
        union_lists: dict[str, list[Any]] = {}
        union_evidence: dict[str, list[str]] = {}
        for occurrences in units:
            seen_scalar: dict[str, Any] = {}
            for plant, line in occurrences:
                if plant.payload_id != payload.id:
                    continue
                spec = payload.field_spec(plant.field)
                if spec.is_list:
                    items = union_lists.setdefault(plant.field, [])
                    if plant.value not in items:
                        items.append(plant.value)
                else:
                    if plant.field not in seen_scalar:
                        seen_scalar[plant.field] = plant.value
                if spec.evidence_partner is not None:
                    sentences = union_evidence.setdefault(spec.evidence_partner, [])
                    if line not in sentences:
                        sentences.append(line)
            for name, value in seen_scalar.items():
                per_unit_scalar.setdefault(name, []).append(value)
        payload_values: dict[str, Any] = {}
        for name, observed in per_unit_scalar.items():
            distinct = list(dict.fromkeys(observed))
            if len(distinct) == 1:
                payload_values[name] = distinct[0]
            else:
                conflicts.append((payload.id, name))
        for name, items in union_lists.items():
            payload_values[name] = items
        for name, sentences in union_evidence.items():
            payload_values[name] = list(sentences)
        if payload_values:
            values[payload.id] = payload_values
        if union_evidence:
            evidence[payload.id] = union_evidence
    return values, evidence, conflicts


def generate_corpus(
    spec: CorpusSpec,
    corpus_dir: str | Path,
    schema_set: SchemaSet,
    *,
    pages_per_chunk: int = 8,
) -> CorpusManifest:
    """Write the corpus PDFs, the keyword table and the ground-truth manifest."""
    corpus_dir = Path(corpus_dir)
    corpus_dir.mkdir(parents=True, exist_ok=True)
    manifest = CorpusManifest(seed=spec.seed, docs=[], rules=[])
    seen_rules: set[tuple[str, str, str, str]] = set()

    def add_rule(rule: KeywordRule) -> None:
        dedupe = (rule.phrase, rule.payload_id, rule.field, json.dumps(rule.value))
        if dedupe not in seen_rules:
            seen_rules.add(dedupe)
            manifest.rules.append(rule)

    for doc in spec.docs:
        for plant in doc.plants:
            payload = schema_set.payload(plant.payload_id)
            spec_field = payload.field_spec(plant.field)  # raises on unknown field
            if spec_field.kind == "evidence_text":
                raise ConfigurationError(
                    f"plant {plant.payload_id}.{plant.field}: evidence fields are"
                    " populated through their partner fields"
                )
            if plant.caption_index is not None and not (
                0 <= plant.caption_index < len(doc.captions)
            ):
                raise ConfigurationError(
                    f"plant {plant.payload_id}.{plant.field}: caption index"
                    f" {plant.caption_index} outside document {doc.name}"
                )
        rng = random.Random(f"{spec.seed}:{doc.name}")
        page_lines: list[list[tuple[str, list[FieldPlant]]]] = [
            [] for _ in range(doc.pages)
        ]
        for page in range(doc.pages):
            for _ in range(doc.background_lines):
                page_lines[page].append((_background_line(rng), []))
        for ordinal, plant in enumerate(doc.plants):
            if plant.caption_index is not None:
                continue
            if not 0 <= plant.page < doc.pages:
                raise ConfigurationError(
                    f"plant page {plant.page} outside document {doc.name}"
                )
            sentence = _plant_sentence(doc, plant, ordinal)
            page_lines[plant.page].append((sentence, [plant]))
            add_rule(
                KeywordRule(sentence, plant.payload_id, plant.field, plant.value, MATCH_LINE)
            )
        caption_records: list[tuple[int, int, str, list[FieldPlant]]] = []
        ordinals: dict[int, int] = {}
        for index, caption in enumerate(doc.captions):
            if not 0 <= caption.page < doc.pages:
                raise ConfigurationError(
                    f"caption page {caption.page} outside document {doc.name}"
                )
            embedded = [
                plant for plant in doc.plants if plant.caption_index == index
            ]
            text = caption.text
            for plant in embedded:
                text = f"{text}; {_plant_clause(plant)}"
            line = f"{caption.kind} {caption.label}. {text}."
            ordinal = ordinals.get(caption.page, 0)
            ordinals[caption.page] = ordinal + 1
            page_lines[caption.page].append((line, embedded))
            caption_records.append((caption.page, ordinal, line, embedded))
            for plant in embedded:
                add_rule(
                    KeywordRule(line, plant.payload_id, plant.field, plant.value, MATCH_LINE)
                )
        pdf = write_minimal_pdf([[line for line, _ in page] for page in page_lines])
        path = corpus_dir / doc.name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(pdf)
        expected_values, expected_evidence, expected_conflicts = _simulate_expected(
            page_lines, caption_records, schema_set, pages_per_chunk
        )
        canonical = canonical_id(doc.name)
        manifest.docs.append(
            DocManifest(
                name=doc.name,
                canonical=canonical,
                key=source_key(canonical),
                pages=doc.pages,
                captions=[(p, o, line) for p, o, line, _ in caption_records],
                expected_values=expected_values,
                expected_evidence=expected_evidence,
                expected_conflicts=expected_conflicts,
            )
        )
    _save_manifest(manifest, corpus_dir)
    return manifest


def _save_manifest(manifest: CorpusManifest, corpus_dir: Path) -> None:
    from .backend import dump_keyword_rules

    data = {
        "seed": manifest.seed,
        "docs": [
            {
                "name": doc.name,
                "canonical": doc.canonical,
                "key": doc.key,
                "pages": doc.pages,
                "captions": doc.captions,
                "expected_values": doc.expected_values,
                "expected_evidence": doc.expected_evidence,
                "expected_conflicts": doc.expected_conflicts,
            }
            for doc in manifest.docs
        ],
    }
    (corpus_dir / "manifest.json").write_text(
        json.dumps(data, indent=1, sort_keys=True), encoding="utf-8"
    )
    (corpus_dir / "keyword_rules.tsv").write_text(
        dump_keyword_rules(manifest.rules), encoding="utf-8"
    )


# --------------------------------------------------------------------------
# Reference corpus shape
# --------------------------------------------------------------------------

_DESIGN_LABELS = (
    "randomized controlled trial", "prospective cohort", "retrospective cohort",
    "case-control study", "cross-sectional study", "diagnostic test accuracy study",
    "pharmacokinetic study", "case report or series",
)
_MOLECULES = ("apixaban", "rivaroxaban", "edoxaban", "dabigatran", "betrixaban")
_METHODS = (
    "liquid chromatography tandem mass spectrometry", "calibrated anti-Xa assay",
    "ecarin-based assay", "dilute thrombin time", "qualitative point-of-care test",
)
_TIMINGS = ("peak", "trough", "random", "not reported")


def paper_shape_spec(seed: int = 0) -> CorpusSpec:
    """A corpus matching the reference study-set shape.

    734 documents totalling 7228 pages; with eight pages per chunk this
    yields 978 chunks, and the caption plants total 824.  Every document
    carries a deterministic set of planted facts for fidelity checks.
    """
    docs: list[DocSpec] = []
    for index in range(734):
        if index < 490:
            pages = 8
        elif index < 490 + 136:
            pages = 14
        else:
            pages = 13
        rng = random.Random(f"shape:{seed}:{index}")
        caption_count = 2 if index < 90 else 1
        captions = []
        for c in range(caption_count):
            captions.append(
                CaptionPlant(
                    page=rng.randrange(pages),
                    kind=rng.choice(("Figure", "Table", "Fig.")),
                    label=str(c + 1),
                    text=rng.choice(
                        (
                            "Overview of the measurement workflow",
                            "Distribution of observed drug levels",
                            "Patient flow through the study",
                            "Assay characteristics by molecule",
                        )
                    ),
                )
            )
        plants: list[FieldPlant] = [
            FieldPlant("meta_design", "year", rng.randint(1998, 2024), page=0),
            FieldPlant(
                "meta_design", "primary_study_design", rng.choice(_DESIGN_LABELS), page=0
            ),
            FieldPlant(
                "outcomes", "sampling_timing", rng.choice(_TIMINGS),
                page=rng.randrange(pages),
            ),
        ]
        for molecule in rng.sample(_MOLECULES, rng.randint(1, 3)):
            plants.append(
                FieldPlant(
                    "population_indications", "doac_molecules", molecule,
                    page=rng.randrange(pages),
                )
            )
        if rng.random() < 0.9:
            plants.append(
                FieldPlant(
                    "population_indications", "total_patients_measured",
                    rng.randint(20, 5000), page=rng.randrange(pages),
                )
            )
        # one method is carried by the first caption, the rest by body text
        plants.append(
            FieldPlant("methods", "measurement_methods", rng.choice(_METHODS), caption_index=0)
        )
        if rng.random() < 0.5:
            plants.append(
                FieldPlant(
                    "methods", "measurement_methods", rng.choice(_METHODS),
                    page=rng.randrange(pages),
                )
            )
        if rng.random() < 0.3:
            plants.append(
                FieldPlant(
                    "diagnostic_performance", "sensitivity_pct",
                    round(rng.uniform(60, 99), 1), page=rng.randrange(pages),
                )
            )
        docs.append(
            DocSpec(
                name=f"doc{index:05d}.pdf",
                pages=pages,
                captions=tuple(captions),
                plants=tuple(plants),
            )
        )
    return CorpusSpec(docs=tuple(docs), seed=seed)


def synthetic_spec(groups: Sequence[Mapping[str, Any]], seed: int = 0) -> CorpusSpec:
    """Plain corpus shapes for throughput and fault scenarios.

    Each group: ``{count, pages, captions, plants}``; plants are a small
    deterministic set per document when enabled.
    """
    docs: list[DocSpec] = []
    index = 0
    for group in groups:
        count = int(group.get("count", 1))
        pages = int(group.get("pages", 8))
        caption_count = int(group.get("captions", 0))
        want_plants = bool(group.get("plants", False))
        for _ in range(count):
            rng = random.Random(f"synth:{seed}:{index}")
            captions = tuple(
                CaptionPlant(page=rng.randrange(pages), label=str(c + 1))
                for c in range(caption_count)
            )
            plants: tuple[FieldPlant, ...] = ()
            if want_plants:
                plants = (
                    FieldPlant("meta_design", "year", rng.randint(1998, 2024), page=0),
                    FieldPlant(
                        "population_indications", "doac_molecules",
                        rng.choice(_MOLECULES), page=rng.randrange(pages),
                    ),
                )
            docs.append(
                DocSpec(
                    name=f"doc{index:05d}.pdf",
                    pages=pages,
                    captions=captions,
                    plants=plants,
                )
            )
            index += 1
    return CorpusSpec(docs=tuple(docs), seed=seed)


# --------------------------------------------------------------------------
# Scenario runner
# --------------------------------------------------------------------------


@dataclass
class ScenarioResult:
    name: str
    report: RunReport
    records: list[StudyRecord]
    stats: MockStats
    failures: list[str]
    corpus_dir: Path
    out_dir: Path
    manifest: CorpusManifest

    @property
    def passed(self) -> bool:
        return not self.failures


def load_scenario(path: str | Path) -> dict[str, Any]:
    with open(path, "r", encoding="utf-8") as handle:
        data = yaml.safe_load(handle)
    if not isinstance(data, dict):
        raise ConfigurationError(f"scenario file {path} must hold a mapping")
    return data


def _scenario_config(raw: Mapping[str, Any]) -> RunConfig:
    return RunConfig(
        pages_per_chunk=int(raw.get("pages_per_chunk", 8)),
        concurrency=int(raw.get("concurrency", 3)),
        rps=float(raw.get("rps", 5.0)),
        retry=RetryPolicy(
            max_retries=int(raw.get("retries", 3)),
            backoff_min=float(raw.get("backoff_min", 1.0)),
            backoff_max=float(raw.get("backoff_max", 60.0)),
        ),
        include_images=bool(raw.get("images", False)),
        overwrite=bool(raw.get("overwrite", False)),
    )


def _build_faults(
    raw_faults: Sequence[Mapping[str, Any]], manifest: CorpusManifest
) -> FaultSchedule:
    schedule = FaultSchedule()
    for raw in raw_faults:
        doc = manifest.docs[int(raw["doc"])]
        unit_id = f"{doc.key}:{raw['unit']}"
        schedule.add(unit_id, str(raw["payload"]), int(raw["attempt"]), int(raw["status"]))
    return schedule


def _check_assertions(
    assertions: Mapping[str, Any],
    report: RunReport,
    stats: MockStats,
    out_dir: Path,
) -> list[str]:
    failures: list[str] = []
    for key, expected in assertions.items():
        if key == "observed_rps":
            target = float(expected["approx"])
            tolerance = float(expected.get("rel_tol", 0.1))
            actual = report.observed_rps
            if abs(actual - target) > tolerance * target:
                failures.append(
                    f"observed_rps {actual:.4f} outside {target} +/- {tolerance:.0%}"
                )
        elif key == "in_flight_high_water":
            if stats.in_flight_high_water != int(expected):
                failures.append(
                    f"in_flight_high_water {stats.in_flight_high_water} != {expected}"
                )
        elif key == "min_dispatch_gap":
            gaps = [
                b - a
                for a, b in zip(stats.dispatch_times, stats.dispatch_times[1:])
            ]
            bound = float(expected) - 1e-9
            bad = [gap for gap in gaps if gap < bound]
            if bad:
                failures.append(
                    f"{len(bad)} dispatch gaps below {expected} (min {min(bad):.6f})"
                )
        elif key == "table_rows":
            with open(out_dir / "studies.csv", "r", encoding="utf-8") as handle:
                rows = sum(1 for _ in handle) - 1
            if rows != int(expected):
                failures.append(f"table_rows {rows} != {expected}")
        elif hasattr(report, key):
            actual = getattr(report, key)
            if actual != expected:
                failures.append(f"{key} {actual} != {expected}")
        else:
            failures.append(f"unknown assertion {key!r}")
    return failures


def build_corpus_spec(raw: Any, seed: int) -> CorpusSpec:
    if raw == "paper_shape":
        return paper_shape_spec(seed)
    if isinstance(raw, Mapping) and "docs" in raw:
        return synthetic_spec(raw["docs"], seed=int(raw.get("seed", seed)))
    raise ConfigurationError(f"unrecognised corpus specification: {raw!r}")


def run_scenario(
    scenario: Mapping[str, Any] | str | Path,
    workdir: str | Path,
    *,
    schema_set: SchemaSet | None = None,
) -> ScenarioResult:
    """Generate the scenario corpus and run it on the virtual clock.

    ``runs`` repeats the pipeline against the same output directory (for
    resume semantics); the report, stats and assertions refer to the final
    run.
    """
    if not isinstance(scenario, Mapping):
        scenario = load_scenario(scenario)
    name = str(scenario.get("name", "scenario"))
    seed = int(scenario.get("seed", 0))
    schema = schema_set or load_schema_set(str(scenario.get("schema", "doac.v1")))
    workdir = Path(workdir)
    corpus_dir = workdir / "corpus"
    out_dir = workdir / "out"
    config = _scenario_config(scenario.get("config", {}))
    spec = build_corpus_spec(scenario.get("corpus", "paper_shape"), seed)
    manifest = generate_corpus(
        spec, corpus_dir, schema, pages_per_chunk=config.pages_per_chunk
    )
    faults = _build_faults(scenario.get("faults", ()), manifest)
    latency_raw = scenario.get("latency", {})
    latency = LatencyModel(
        kind=str(latency_raw.get("kind", "none")),
        seconds=float(latency_raw.get("seconds", 0.0)),
        mu=float(latency_raw.get("mu", -1.0)),
        sigma=float(latency_raw.get("sigma", 0.5)),
    )
    preprocessed = scenario.get("preprocessed", ())
    if preprocessed:
        index = ProcessedIndex.load(out_dir / "processed.index.jsonl")
        for doc_index in preprocessed:
            doc = manifest.docs[int(doc_index)]
            index.mark_processed(
                doc.key,
                completed_at="1970-01-01T00:00:00.000000Z",
                schema_version=schema.version,
                unit_count=doc.unit_count(config.pages_per_chunk),
            )

    runs = int(scenario.get("runs", 1))
    report: RunReport | None = None
    records: list[StudyRecord] = []
    backend: MockBackend | None = None
    for _ in range(runs):
        clock = SimulatedClock()
        backend = MockBackend(
            schema,
            seed=seed,
            rules=manifest.rules,
            fault_schedule=faults,
            latency=latency,
            clock=clock,
        )
        report, records = run_simulated(
            run_corpus(corpus_dir, out_dir, schema, backend, config, clock=clock)
        )
    assert report is not None and backend is not None
    failures = _check_assertions(
        scenario.get("assertions", {}), report, backend.stats, out_dir
    )
    for failure in failures:
        logger.warning("scenario %s: %s", name, failure)
    return ScenarioResult(
        name=name,
        report=report,
        records=records,
        stats=backend.stats,
        failures=failures,
        corpus_dir=corpus_dir,
        out_dir=out_dir,
        manifest=manifest,
    )
