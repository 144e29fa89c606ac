"""Corpus orchestration: bounded concurrency, pacing, retries, resume.

Every (unit, payload) call runs through :func:`bounded_call`: acquire a
concurrency slot, wait for a rate-limiter reservation, call the backend,
and release the slot before any backoff sleep so a waiting unit can use it.
Documents are processed sequentially and each one is fully consolidated,
exported and only then marked processed, so an interrupted run resumes at
the first incomplete document without re-spending completed calls.
"""

from __future__ import annotations

import asyncio
import datetime
import json
import logging
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .backend import (
    AnnotationBackend,
    AnnotationRequest,
    ImageObject,
    STATUS_OK,
    TransportError,
    UnitAnnotation,
    annotation_from_json,
    annotation_to_json,
    failed_annotation,
    is_retryable,
)
from .chunking import (
    DEFAULT_CAPTION_GRAMMAR,
    DEFAULT_PAGES_PER_CHUNK,
    CaptionGrammar,
    DocumentUnit,
    UnitKind,
    build_chunk_units,
    extract_caption_units,
)
from .clock import Clock
from .errors import ConfigurationError, ExcludedDocument
from .export import (
    StudyTableWriter,
    export_corpus_tables,
    pair_images_to_pages,
    record_to_row,
    render_markdown,
)
from .ingest import (
    DocumentDescriptor,
    ProcessedIndex,
    canonical_id,
    describe_document,
    discover,
    source_key,
)
from .merging import StudyRecord, integrate_payloads, merge_payload
from .quality import (
    DEFAULT_WEIGHTS,
    QualityIndicators,
    count_artifact_lines,
    proxy_score,
    structural_completeness,
)
from .schema import SchemaSet, sanity_rules

logger = logging.getLogger(__name__)

RETRY_EXHAUSTED = "retry_exhausted"


@dataclass(frozen=True)
class RetryPolicy:
    """Bounded retries with doubling, capped backoff."""

    max_retries: int = 3
    backoff_min: float = 1.0
    backoff_max: float = 60.0

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ConfigurationError("max retries must be >= 0")
        if self.backoff_min <= 0:
            raise ConfigurationError("minimum backoff must be positive")
        if self.backoff_max < self.backoff_min:
            raise ConfigurationError("maximum backoff must be >= minimum backoff")


@dataclass(frozen=True)
class RunConfig:
    pages_per_chunk: int = DEFAULT_PAGES_PER_CHUNK
    concurrency: int = 3
    rps: float = 5.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    include_images: bool = False
    overwrite: bool = False

    def __post_init__(self) -> None:
        if self.pages_per_chunk < 1:
            raise ConfigurationError("pages per chunk must be >= 1")
        if self.concurrency < 1:
            raise ConfigurationError("concurrency must be >= 1")
        if self.rps <= 0:
            raise ConfigurationError("request rate must be positive")


@dataclass
class RunReport:
    """Counters and derived rates for one corpus run."""

    docs_seen: int = 0
    docs_skipped: int = 0
    docs_excluded: int = 0
    docs_processed: int = 0
    chunks: int = 0
    captions: int = 0
    requests_issued: int = 0
    retries: int = 0
    transient_errors: int = 0
    failed_units: int = 0
    wall_clock_seconds: float = 0.0
    observed_rps: float = 0.0
    mean_doc_seconds: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


class RateLimiter:
    """Reservation-based pacing: consecutive dispatch grants are spaced by
    at least ``1 / rps`` seconds; an idle limiter adds no delay."""

    def __init__(self, rps: float) -> None:
        if rps <= 0:
            raise ConfigurationError("request rate must be positive")
        self.interval = 1.0 / rps
        self._next_free: float | None = None
        self._lock = asyncio.Lock()

    def reserve(self, now: float) -> float:
        """Grant the earliest dispatch time >= all previous grants + interval."""
        if self._next_free is None or self._next_free < now:
            target = now
        else:
            target = self._next_free
        self._next_free = target + self.interval
        return target

    async def wait(self, clock: Clock) -> float:
        async with self._lock:
            now = clock.now()
            target = self.reserve(now)
        if target > now:
            await clock.sleep(target - now)
        return target


class CallLog:
    """JSON-lines log of every backend call attempt."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = open(self.path, "w", encoding="utf-8")

    def write(self, **fields: Any) -> None:
        self._handle.write(json.dumps(fields, sort_keys=True) + "\n")

    def close(self) -> None:
        self._handle.flush()
        self._handle.close()


@dataclass
class _Counters:
    requests_issued: int = 0
    retries: int = 0
    transient_errors: int = 0
    failed_units: int = 0


async def bounded_call(
    request: AnnotationRequest,
    backend: AnnotationBackend,
    semaphore: asyncio.Semaphore,
    limiter: RateLimiter,
    policy: RetryPolicy,
    clock: Clock,
    counters: _Counters,
    call_log: CallLog | None = None,
) -> UnitAnnotation:
    """One (unit, payload) call under all orchestration limits.

    The concurrency slot is held only for the call itself; backoff sleeps
    happen outside it.  Retryable failures are retried up to the policy's
    budget with doubling, capped backoff; the budget-exhausting error is
    not followed by a sleep.  Non-retryable failures fail immediately.
    Failed units become failed annotations, never exceptions.
    """
    counters.requests_issued += 1
    retries_used = 0
    backoff = policy.backoff_min
    attempts = 0
    while True:
        error: TransportError | None = None
        async with semaphore:
            await limiter.wait(clock)
            attempts += 1
            started = clock.now()
            try:
                annotation = await backend.annotate(request)
            except TransportError as exc:
                error = exc
        elapsed = clock.now() - started
        if call_log is not None:
            call_log.write(
                unit_id=request.unit_id,
                payload_id=request.payload.id,
                attempt=attempts,
                outcome="ok" if error is None else f"error:{error.status}",
                started=round(started, 6),
                seconds=round(elapsed, 6),
            )
        if error is None:
            annotation.attempts = attempts
            return annotation
        if not is_retryable(error):
            return failed_annotation(request, f"{error.status}: {error.message}", attempts)
        counters.transient_errors += 1
        retries_used += 1
        if retries_used > policy.max_retries:
            return failed_annotation(
                request, f"{RETRY_EXHAUSTED}: last error {error.status}", attempts
            )
        counters.retries += 1
        await clock.sleep(backoff)
        backoff = min(2.0 * backoff, policy.backoff_max)


def build_request(
    unit: DocumentUnit,
    payload_schema: Any,
    data_url: str | None,
    include_images: bool,
) -> AnnotationRequest:
    if unit.kind is UnitKind.PAGE_CHUNK:
        return AnnotationRequest(
            parent=unit.parent,
            unit_id=unit.unit_id,
            payload=payload_schema,
            data_url=data_url,
            pages=unit.pages,
            include_images=include_images,
        )
    return AnnotationRequest(
        parent=unit.parent,
        unit_id=unit.unit_id,
        payload=payload_schema,
        caption_text=unit.caption_text,
    )


async def process_document_units(
    units: Sequence[DocumentUnit],
    schema_set: SchemaSet,
    backend: AnnotationBackend,
    *,
    data_url: str | None,
    semaphore: asyncio.Semaphore,
    limiter: RateLimiter,
    policy: RetryPolicy,
    clock: Clock,
    counters: _Counters,
    include_images: bool = False,
    call_log: CallLog | None = None,
) -> dict[str, dict[str, UnitAnnotation]]:
    """Annotate every (unit, payload) pair concurrently.

    Returns one annotation per pair, keyed ``[payload_id][unit_id]``;
    failures are contained as failed annotations.
    """
    pairs = [
        (unit, payload)
        for unit in units
        for payload in schema_set.payloads
    ]
    tasks = [
        bounded_call(
            build_request(unit, payload, data_url, include_images),
            backend, semaphore, limiter, policy, clock, counters, call_log,
        )
        for unit, payload in pairs
    ]
    results = await asyncio.gather(*tasks)
    annotations: dict[str, dict[str, UnitAnnotation]] = {
        payload.id: {} for payload in schema_set.payloads
    }
    for (unit, payload), annotation in zip(pairs, results):
        annotations[payload.id][unit.unit_id] = annotation
        if annotation.status != STATUS_OK:
            counters.failed_units += 1
    return annotations


def _assemble_pages(
    chunk_units: Sequence[DocumentUnit],
    annotations: Mapping[str, Mapping[str, UnitAnnotation]],
    schema_set: SchemaSet,
) -> tuple[dict[int, str], dict[int, list[ImageObject]]]:
    """Collect per-page markdown and images from chunk annotations.

    For each chunk the first payload (in schema order) that succeeded
    supplies the page text, so page reconstruction survives partial payload
    failures.
    """
    page_markdowns: dict[int, str] = {}
    images_by_page: dict[int, list[ImageObject]] = {}
    for unit in chunk_units:
        for payload_id in schema_set.payload_ids:
            annotation = annotations[payload_id].get(unit.unit_id)
            if annotation is not None and annotation.status == STATUS_OK:
                page_markdowns.update(annotation.page_markdowns)
                for page, images in pair_images_to_pages(annotation).items():
                    images_by_page[page] = list(images)
                break
    return page_markdowns, images_by_page


def _rfc3339(timestamp: float) -> str:
    moment = datetime.datetime.fromtimestamp(timestamp, tz=datetime.timezone.utc)
    return moment.isoformat(timespec="microseconds").replace("+00:00", "Z")


def _cache_path(cache_dir: Path, unit_id: str, payload_id: str) -> Path:
    return cache_dir / f"{unit_id}.{payload_id}.json"


def _write_cache(
    cache_dir: Path, annotations: Mapping[str, Mapping[str, UnitAnnotation]]
) -> None:
    cache_dir.mkdir(parents=True, exist_ok=True)
    for payload_id, by_unit in annotations.items():
        for unit_id, annotation in by_unit.items():
            if annotation.status == STATUS_OK:
                path = _cache_path(cache_dir, unit_id, payload_id)
                path.write_text(
                    json.dumps(annotation_to_json(annotation), sort_keys=True),
                    encoding="utf-8",
                )


def _log_excluded(path: Path, canonical: str, reason: str) -> None:
    with open(path, "a", encoding="utf-8") as handle:
        handle.write(f"{canonical}\t{reason}\n")


@dataclass
class _DocQuality:
    key: str
    artifact_lines: int
    nonempty_lines: int
    page_tokens: list[int]
    sanity_passed: int
    sanity_checked: int
    conformance_mean: float


def _doc_quality(
    descriptor: DocumentDescriptor,
    record: StudyRecord,
    page_markdowns: Mapping[int, str],
    annotations: Mapping[str, Mapping[str, UnitAnnotation]],
    schema_set: SchemaSet,
) -> _DocQuality:
    artifact = 0
    nonempty = 0
    page_tokens: list[int] = []
    for page in range(descriptor.page_count):
        text = page_markdowns.get(page, "")
        a, n = count_artifact_lines(text)
        artifact += a
        nonempty += n
        page_tokens.append(len(text.split()))
    row = record_to_row(record, schema_set)
    passed = 0
    checked = 0
    for column, rule in sanity_rules(schema_set).items():
        value = row.get(column)
        if value is None:
            continue
        checked += 1
        if rule.check(value):
            passed += 1
    ratios = [
        annotation.conformance_ratio
        for by_unit in annotations.values()
        for annotation in by_unit.values()
        if annotation.status == STATUS_OK
    ]
    return _DocQuality(
        key=descriptor.key,
        artifact_lines=artifact,
        nonempty_lines=nonempty,
        page_tokens=page_tokens,
        sanity_passed=passed,
        sanity_checked=checked,
        conformance_mean=statistics.fmean(ratios) if ratios else 1.0,
    )


def _write_quality_report(path: Path, accumulated: Sequence[_DocQuality]) -> None:
    all_tokens = [count for doc in accumulated for count in doc.page_tokens]
    median_tokens = statistics.median(all_tokens) if all_tokens else 0.0
    lines = [
        "source_key,corruption,numeric_sanity,type_conformance,structural_completeness,proxy_score"
    ]
    for doc in accumulated:
        corruption = (
            1.0 - doc.artifact_lines / doc.nonempty_lines if doc.nonempty_lines else 0.0
        )
        sanity = doc.sanity_passed / doc.sanity_checked if doc.sanity_checked else 1.0
        structural = structural_completeness(doc.page_tokens, median_tokens)
        indicators = QualityIndicators(
            corruption=corruption,
            numeric_sanity=sanity,
            type_conformance=doc.conformance_mean,
            structural_completeness=structural,
        )
        score = proxy_score(indicators, DEFAULT_WEIGHTS)
        lines.append(
            f"{doc.key},{corruption:.4f},{sanity:.4f},"
            f"{doc.conformance_mean:.4f},{structural:.4f},{score:.1f}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


async def _regenerate_from_cache(
    descriptor: DocumentDescriptor,
    out_dir: Path,
    schema_set: SchemaSet,
    backend: AnnotationBackend,
    config: RunConfig,
    *,
    semaphore: asyncio.Semaphore,
    limiter: RateLimiter,
    clock: Clock,
    counters: _Counters,
    table: StudyTableWriter,
    grammar: CaptionGrammar,
    call_log: CallLog | None,
) -> None:
    """Rebuild an indexed document's artifacts, calling only on cache misses."""
    cache_dir = out_dir / "cache"

    async def fetch(unit: DocumentUnit, payload: Any) -> UnitAnnotation:
        path = _cache_path(cache_dir, unit.unit_id, payload.id)
        if path.exists():
            return annotation_from_json(json.loads(path.read_text(encoding="utf-8")))
        request = build_request(unit, payload, descriptor.data_url, config.include_images)
        return await bounded_call(
            request, backend, semaphore, limiter, config.retry, clock, counters, call_log
        )

    chunk_units = build_chunk_units(
        descriptor.key, descriptor.page_count, config.pages_per_chunk
    )
    annotations: dict[str, dict[str, UnitAnnotation]] = {
        payload.id: {} for payload in schema_set.payloads
    }
    for unit in chunk_units:
        for payload in schema_set.payloads:
            annotations[payload.id][unit.unit_id] = await fetch(unit, payload)
    page_markdowns, images_by_page = _assemble_pages(chunk_units, annotations, schema_set)
    caption_units = extract_caption_units(page_markdowns, descriptor.key, grammar)
    for unit in caption_units:
        for payload in schema_set.payloads:
            annotations[payload.id][unit.unit_id] = await fetch(unit, payload)
    _write_cache(cache_dir, annotations)
    failed_ids = [
        annotation.unit_id
        for by_unit in annotations.values()
        for annotation in by_unit.values()
        if annotation.status != STATUS_OK
    ]
    merged = {
        payload.id: merge_payload(payload, list(annotations[payload.id].values()))
        for payload in schema_set.payloads
    }
    record = integrate_payloads(merged, descriptor.key, schema_set.payload_ids, failed_ids)
    table.append_record(record, schema_set)
    markdown = render_markdown(
        record, schema_set, descriptor.page_count, page_markdowns, images_by_page
    )
    (out_dir / "markdown" / f"{descriptor.key}.md").write_text(markdown, encoding="utf-8")


async def run_corpus(
    corpus_dir: str | Path,
    out_dir: str | Path,
    schema_set: SchemaSet,
    backend: AnnotationBackend,
    config: RunConfig | None = None,
    *,
    clock: Clock | None = None,
    caption_grammar: CaptionGrammar = DEFAULT_CAPTION_GRAMMAR,
    strata: Sequence[tuple[str, str]] = (),
    charts: bool = False,
) -> tuple[RunReport, list[StudyRecord]]:
    """Process every document under ``corpus_dir`` into ``out_dir``.

    Documents are handled in canonical-identifier order.  Per document the
    order is strict: annotate, consolidate, export artifacts, then mark the
    resume index, so the index never names a document whose artifacts are
    missing.  Returns the run report and the records processed this run.
    """
    config = config or RunConfig()
    clock = clock or Clock()
    corpus_dir = Path(corpus_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "markdown").mkdir(exist_ok=True)

    started = clock.now()
    index = ProcessedIndex.load(out_dir / "processed.index.jsonl")
    table = StudyTableWriter(out_dir / "studies.csv", schema_set)
    call_log = CallLog(out_dir / "calls.jsonl")
    excluded_path = out_dir / "excluded.log"
    semaphore = asyncio.Semaphore(config.concurrency)
    limiter = RateLimiter(config.rps)
    counters = _Counters()
    report = RunReport()
    records: list[StudyRecord] = []
    quality: list[_DocQuality] = []
    doc_seconds: list[float] = []

    try:
        for path in discover(corpus_dir):
            report.docs_seen += 1
            canonical = canonical_id(str(path.relative_to(corpus_dir)))
            key = source_key(canonical)
            if index.is_processed(key):
                report.docs_skipped += 1
                if config.overwrite:
                    descriptor = describe_document(path, corpus_dir)
                    await _regenerate_from_cache(
                        descriptor, out_dir, schema_set, backend, config,
                        semaphore=semaphore, limiter=limiter, clock=clock,
                        counters=counters, table=table, grammar=caption_grammar,
                        call_log=call_log,
                    )
                continue
            try:
                descriptor = describe_document(path, corpus_dir)
            except ExcludedDocument as exc:
                logger.warning("excluding %s: %s", canonical, exc)
                _log_excluded(excluded_path, canonical, str(exc))
                report.docs_excluded += 1
                continue

            doc_started = clock.now()
            chunk_units = build_chunk_units(
                descriptor.key, descriptor.page_count, config.pages_per_chunk
            )
            annotations = await process_document_units(
                chunk_units, schema_set, backend,
                data_url=descriptor.data_url, semaphore=semaphore, limiter=limiter,
                policy=config.retry, clock=clock, counters=counters,
                include_images=config.include_images, call_log=call_log,
            )
            report.chunks += len(chunk_units)

            page_markdowns, images_by_page = _assemble_pages(
                chunk_units, annotations, schema_set
            )
            caption_units = extract_caption_units(
                page_markdowns, descriptor.key, caption_grammar
            )
            if caption_units:
                caption_annotations = await process_document_units(
                    caption_units, schema_set, backend,
                    data_url=None, semaphore=semaphore, limiter=limiter,
                    policy=config.retry, clock=clock, counters=counters,
                    include_images=False, call_log=call_log,
                )
                for payload_id, by_unit in caption_annotations.items():
                    annotations[payload_id].update(by_unit)
            report.captions += len(caption_units)

            failed_ids = [
                annotation.unit_id
                for by_unit in annotations.values()
                for annotation in by_unit.values()
                if annotation.status != STATUS_OK
            ]
            merged = {
                payload.id: merge_payload(payload, list(annotations[payload.id].values()))
                for payload in schema_set.payloads
            }
            record = integrate_payloads(
                merged, descriptor.key, schema_set.payload_ids, failed_ids
            )
            _write_cache(out_dir / "cache", annotations)
            table.append_record(record, schema_set)
            markdown = render_markdown(
                record, schema_set, descriptor.page_count, page_markdowns, images_by_page
            )
            (out_dir / "markdown" / f"{descriptor.key}.md").write_text(
                markdown, encoding="utf-8"
            )
            index.mark_processed(
                key,
                completed_at=_rfc3339(clock.wall_time()),
                schema_version=schema_set.version,
                unit_count=len(chunk_units) + len(caption_units),
            )
            records.append(record)
            report.docs_processed += 1
            doc_seconds.append(clock.now() - doc_started)
            quality.append(
                _doc_quality(descriptor, record, page_markdowns, annotations, schema_set)
            )

        _write_quality_report(out_dir / "quality_report.csv", quality)
        export_corpus_tables(out_dir, schema_set, strata=strata, charts=charts)
    finally:
        call_log.close()

    report.requests_issued = counters.requests_issued
    report.retries = counters.retries
    report.transient_errors = counters.transient_errors
    report.failed_units = counters.failed_units
    report.wall_clock_seconds = clock.now() - started
    report.observed_rps = (
        report.requests_issued / report.wall_clock_seconds
        if report.wall_clock_seconds > 0
        else 0.0
    )
    report.mean_doc_seconds = statistics.fmean(doc_seconds) if doc_seconds else 0.0
    (out_dir / "run_report.json").write_text(report.to_json(), encoding="utf-8")
    return report, records
