"""Annotation backends: request/response types, retry policy, mock and HTTP.

A backend annotates one (unit, payload) pair per call.  Every response passes
through the schema validation gate before leaving this module, so callers
only ever see typed values.  The mock backend is a deterministic stand-in
that really reads page text out of (uncompressed) PDFs, applies a keyword
table, quotes the containing line as evidence, and supports scripted faults
and latency so orchestration behaviour can be tested end to end without a
network.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import random
import re
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

import httpx

from .chunking import DEFAULT_CAPTION_GRAMMAR, CaptionGrammar
from .clock import Clock
from .errors import ConfigurationError
from .ingest import decode_data_url
from .schema import PayloadSchema, SchemaSet, validate_annotation

logger = logging.getLogger(__name__)

ENV_API_URL = "EXTRACTOR_API_URL"
ENV_API_KEY = "EXTRACTOR_API_KEY"

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})
_RETRYABLE_PHRASES = ("rate limit", "quota")

REGION_TYPES = ("table", "graph", "photo", "diagram", "other")

STATUS_OK = "ok"
STATUS_FAILED = "failed"


class TransportError(Exception):
    """A backend call that did not produce a usable annotation."""

    def __init__(self, status: int, message: str) -> None:
        super().__init__(f"{status}: {message}")
        self.status = status
        self.message = message


def is_retryable(error: TransportError) -> bool:
    """Transient failures worth retrying: throttle/server statuses, or a
    body complaining about rate limits or quota regardless of status."""
    if error.status in RETRYABLE_STATUSES:
        return True
    lowered = error.message.casefold()
    return any(phrase in lowered for phrase in _RETRYABLE_PHRASES)


@dataclass(frozen=True)
class AnnotationRequest:
    """One (unit, payload) annotation call.

    Exactly one of ``pages`` (a half-open page window into the document) or
    ``caption_text`` (standalone caption block) must be set.
    """

    parent: str
    unit_id: str
    payload: PayloadSchema
    data_url: str | None = None
    pages: tuple[int, int] | None = None
    caption_text: str | None = None
    include_images: bool = False

    def __post_init__(self) -> None:
        if (self.pages is None) == (self.caption_text is None):
            raise ConfigurationError(
                "request must carry either a page window or caption text, not both"
            )
        if self.pages is not None and self.data_url is None:
            raise ConfigurationError("page-window requests need the document data URL")


@dataclass(frozen=True)
class ImageObject:
    """A visual region cropped out of a page."""

    bbox: tuple[int, int, int, int]
    image_base64: str
    description: str
    region_type: str

    def __post_init__(self) -> None:
        if self.region_type not in REGION_TYPES:
            raise ConfigurationError(f"unknown region type {self.region_type!r}")


@dataclass
class UnitAnnotation:
    """Validated outcome of one (unit, payload) call."""

    parent: str
    unit_id: str
    payload_id: str
    values: dict[str, Any] = field(default_factory=dict)
    page_markdowns: dict[int, str] = field(default_factory=dict)
    images: list[ImageObject] = field(default_factory=list)
    status: str = STATUS_OK
    error: str | None = None
    attempts: int = 1
    conformance_ratio: float = 1.0

    def __post_init__(self) -> None:
        if self.status not in (STATUS_OK, STATUS_FAILED):
            raise ConfigurationError(f"unknown annotation status {self.status!r}")
        if self.status == STATUS_FAILED and self.error is None:
            raise ConfigurationError("failed annotations must carry an error")
        if self.status == STATUS_OK and self.error is not None:
            raise ConfigurationError("ok annotations must not carry an error")


def failed_annotation(request: AnnotationRequest, error: str, attempts: int) -> UnitAnnotation:
    return UnitAnnotation(
        parent=request.parent,
        unit_id=request.unit_id,
        payload_id=request.payload.id,
        status=STATUS_FAILED,
        error=error,
        attempts=attempts,
    )


def annotation_to_json(annotation: UnitAnnotation) -> dict[str, Any]:
    return {
        "parent": annotation.parent,
        "unit_id": annotation.unit_id,
        "payload_id": annotation.payload_id,
        "values": annotation.values,
        "page_markdowns": {str(k): v for k, v in annotation.page_markdowns.items()},
        "images": [
            {
                "bbox": list(image.bbox),
                "image_base64": image.image_base64,
                "description": image.description,
                "region_type": image.region_type,
            }
            for image in annotation.images
        ],
        "status": annotation.status,
        "error": annotation.error,
        "attempts": annotation.attempts,
        "conformance_ratio": annotation.conformance_ratio,
    }


def annotation_from_json(data: Mapping[str, Any]) -> UnitAnnotation:
    return UnitAnnotation(
        parent=data["parent"],
        unit_id=data["unit_id"],
        payload_id=data["payload_id"],
        values=dict(data.get("values") or {}),
        page_markdowns={int(k): v for k, v in (data.get("page_markdowns") or {}).items()},
        images=[
            ImageObject(
                bbox=tuple(raw["bbox"]),
                image_base64=raw["image_base64"],
                description=raw["description"],
                region_type=raw["region_type"],
            )
            for raw in data.get("images") or []
        ],
        status=data.get("status", STATUS_OK),
        error=data.get("error"),
        attempts=int(data.get("attempts", 1)),
        conformance_ratio=float(data.get("conformance_ratio", 1.0)),
    )


class AnnotationBackend(Protocol):
    async def annotate(self, request: AnnotationRequest) -> UnitAnnotation:
        """Annotate one unit or raise :class:`TransportError`."""


# --------------------------------------------------------------------------
# Minimal PDF text extraction (uncompressed text operators only)
# --------------------------------------------------------------------------

_OBJ_PATTERN = re.compile(rb"(\d+)\s+0\s+obj(.*?)endobj", re.DOTALL)
_KIDS_PATTERN = re.compile(rb"/Kids\s*\[(.*?)\]", re.DOTALL)
_REF_PATTERN = re.compile(rb"(\d+)\s+0\s+R")
_CONTENTS_PATTERN = re.compile(rb"/Contents\s+(\d+)\s+0\s+R")
_STREAM_PATTERN = re.compile(rb"stream\r?\n(.*?)\r?\nendstream", re.DOTALL)
_TJ_PATTERN = re.compile(rb"\(((?:[^()\\]|\\.)*)\)\s*Tj")

_PDF_STRING_ESCAPES = {
    b"n": b"\n", b"r": b"\r", b"t": b"\t", b"b": b"\b", b"f": b"\f",
    b"(": b"(", b")": b")", b"\\": b"\\",
}


def _unescape_pdf_string(raw: bytes) -> str:
    out = bytearray()
    i = 0
    while i < len(raw):
        char = raw[i:i + 1]
        if char == b"\\" and i + 1 < len(raw):
            nxt = raw[i + 1:i + 2]
            if nxt in _PDF_STRING_ESCAPES:
                out += _PDF_STRING_ESCAPES[nxt]
                i += 2
                continue
            if nxt.isdigit():
                j = i + 1
                while j < min(len(raw), i + 4) and raw[j:j + 1].isdigit():
                    j += 1
                out.append(int(raw[i + 1:j], 8) & 0xFF)
                i = j
                continue
            i += 1
            continue
        out += char
        i += 1
    return out.decode("latin-1")


def extract_page_texts(pdf_bytes: bytes) -> list[str]:
    """Per-page text (one string per page, lines joined by newlines).

    Understands only the structural subset the simulation corpus writer
    emits: a single page tree and uncompressed ``(text) Tj`` operators.
    Pages whose content cannot be read yield empty strings.
    """
    objects = {int(m.group(1)): m.group(2) for m in _OBJ_PATTERN.finditer(pdf_bytes)}
    kid_refs: list[int] = []
    for body in objects.values():
        if re.search(rb"/Type\s*/Pages\b", body):
            match = _KIDS_PATTERN.search(body)
            if match:
                kid_refs = [int(r.group(1)) for r in _REF_PATTERN.finditer(match.group(1))]
                break
    texts: list[str] = []
    for ref in kid_refs:
        body = objects.get(ref, b"")
        contents = _CONTENTS_PATTERN.search(body)
        if not contents:
            texts.append("")
            continue
        stream_body = objects.get(int(contents.group(1)), b"")
        stream = _STREAM_PATTERN.search(stream_body)
        if not stream:
            texts.append("")
            continue
        lines = [_unescape_pdf_string(m.group(1)) for m in _TJ_PATTERN.finditer(stream.group(1))]
        texts.append("\n".join(lines))
    return texts


# --------------------------------------------------------------------------
# Keyword table
# --------------------------------------------------------------------------

MATCH_SUBSTRING = "substring"
MATCH_LINE = "line"


@dataclass(frozen=True)
class KeywordRule:
    """Maps a trigger phrase in unit text onto one (payload, field, value).

    ``match`` is either ``substring`` (phrase occurs anywhere, word-bounded,
    case-insensitive) or ``line`` (phrase equals a whole text line).  When
    the target field has an evidence partner, the containing line (or the
    explicit ``evidence_sentence``) is quoted verbatim as evidence.
    """

    phrase: str
    payload_id: str
    field: str
    value: Any
    match: str = MATCH_SUBSTRING
    evidence_sentence: str | None = None

    def __post_init__(self) -> None:
        if not self.phrase.strip():
            raise ConfigurationError("keyword rule phrase must be non-empty")
        if self.match not in (MATCH_SUBSTRING, MATCH_LINE):
            raise ConfigurationError(f"unknown keyword match mode {self.match!r}")


def default_keyword_rules(schema_set: SchemaSet) -> list[KeywordRule]:
    """Substring rules derived from every enum vocabulary label and alias.

    Convenient for ad-hoc runs, but labels shared between payloads fire for
    each of them; corpora built for fidelity measurements should carry their
    own unambiguous rules instead.
    """
    rules: list[KeywordRule] = []
    for payload in schema_set.payloads:
        for spec in payload.fields:
            for label in spec.vocabulary:
                rules.append(KeywordRule(label, payload.id, spec.name, label))
            for alias, label in spec.aliases.items():
                rules.append(KeywordRule(alias, payload.id, spec.name, label))
    return rules


def parse_keyword_rules(text: str) -> list[KeywordRule]:
    """Parse the tab-separated keyword table format.

    Columns: phrase, payload, field, value (JSON), then optionally the match
    mode and an explicit evidence sentence.  Blank lines and ``#`` comments
    are ignored.
    """
    rules: list[KeywordRule] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 4:
            raise ConfigurationError(f"keyword table line {lineno}: expected >= 4 columns")
        phrase, payload_id, field_name, value_json = parts[:4]
        try:
            value = json.loads(value_json)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(
                f"keyword table line {lineno}: bad value {value_json!r}: {exc}"
            ) from None
        match = parts[4].strip() if len(parts) > 4 and parts[4].strip() else MATCH_SUBSTRING
        evidence = parts[5] if len(parts) > 5 and parts[5] else None
        rules.append(
            KeywordRule(
                phrase=phrase,
                payload_id=payload_id.strip(),
                field=field_name.strip(),
                value=value,
                match=match,
                evidence_sentence=evidence,
            )
        )
    return rules


def load_keyword_rules(path: str | Path) -> list[KeywordRule]:
    return parse_keyword_rules(Path(path).read_text(encoding="utf-8"))


def dump_keyword_rules(rules: Sequence[KeywordRule]) -> str:
    lines = []
    for rule in rules:
        parts = [rule.phrase, rule.payload_id, rule.field, json.dumps(rule.value), rule.match]
        if rule.evidence_sentence is not None:
            parts.append(rule.evidence_sentence)
        lines.append("\t".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


# --------------------------------------------------------------------------
# Fault schedule and latency model
# --------------------------------------------------------------------------


@dataclass
class FaultSchedule:
    """Scripted statuses per (unit, payload, attempt), for failure testing."""

    faults: dict[tuple[str, str, int], int] = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "FaultSchedule":
        """One fault per line: ``<unit_id> <payload_id> <attempt_no> <status>``."""
        schedule = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ConfigurationError(f"fault schedule line {lineno}: expected 4 fields")
            unit_id, payload_id, attempt, status = parts
            schedule.add(unit_id, payload_id, int(attempt), int(status))
        return schedule

    @classmethod
    def load(cls, path: str | Path) -> "FaultSchedule":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def add(self, unit_id: str, payload_id: str, attempt: int, status: int) -> None:
        if attempt < 1:
            raise ConfigurationError("fault attempt numbers start at 1")
        self.faults[(unit_id, payload_id, attempt)] = status

    def lookup(self, unit_id: str, payload_id: str, attempt: int) -> int | None:
        return self.faults.get((unit_id, payload_id, attempt))

    def dump(self) -> str:
        lines = [
            f"{unit} {payload} {attempt} {status}"
            for (unit, payload, attempt), status in sorted(self.faults.items())
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    def __len__(self) -> int:
        return len(self.faults)


@dataclass(frozen=True)
class LatencyModel:
    """Deterministic per-call latency: none, fixed, or log-normal."""

    kind: str = "none"  # none | fixed | lognormal
    seconds: float = 0.0
    mu: float = -1.0
    sigma: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in ("none", "fixed", "lognormal"):
            raise ConfigurationError(f"unknown latency kind {self.kind!r}")
        if self.seconds < 0:
            raise ConfigurationError("fixed latency must be non-negative")

    def sample(self, salt: str) -> float:
        if self.kind == "none":
            return 0.0
        if self.kind == "fixed":
            return self.seconds
        return random.Random(salt).lognormvariate(self.mu, self.sigma)


# --------------------------------------------------------------------------
# Mock backend
# --------------------------------------------------------------------------


def _tiny_png_base64() -> str:
    def chunk(tag: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + tag
            + data
            + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
        )

    header = struct.pack(">IIBBBBB", 1, 1, 8, 2, 0, 0, 0)
    body = zlib.compress(b"\x00\x80\x80\x80", 9)
    png = b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", header) + chunk(b"IDAT", body) + chunk(b"IEND", b"")
    return base64.b64encode(png).decode("ascii")


TINY_PNG_BASE64 = _tiny_png_base64()


@dataclass
class MockStats:
    """Instrumentation for concurrency and pacing assertions."""

    dispatch_times: list[float] = field(default_factory=list)
    in_flight_high_water: int = 0
    calls: int = 0
    _in_flight: int = 0

    def enter(self, now: float) -> None:
        self.calls += 1
        self.dispatch_times.append(now)
        self._in_flight += 1
        self.in_flight_high_water = max(self.in_flight_high_water, self._in_flight)

    def leave(self) -> None:
        self._in_flight -= 1


class MockBackend:
    """Deterministic in-process backend.

    For page-window requests it decodes the document from the request's data
    URL, extracts the covered pages' text, and renders each page back as
    markdown (one paragraph per source line, with image placeholders for
    caption regions when images are requested).  Values come exclusively
    from the keyword table; the line containing a trigger is quoted as the
    evidence sentence for the field's evidence partner.  Responses are a
    pure function of (seed, unit id, payload id, request contents); the
    attempt counter only drives the fault schedule and latency sampling.
    """

    def __init__(
        self,
        schema_set: SchemaSet,
        *,
        seed: int = 0,
        rules: Sequence[KeywordRule] | None = None,
        fault_schedule: FaultSchedule | None = None,
        latency: LatencyModel | None = None,
        clock: Clock | None = None,
        grammar: CaptionGrammar = DEFAULT_CAPTION_GRAMMAR,
    ) -> None:
        self.schema_set = schema_set
        self.seed = seed
        self.rules = list(default_keyword_rules(schema_set) if rules is None else rules)
        self.faults = fault_schedule or FaultSchedule()
        self.latency = latency or LatencyModel()
        self.clock = clock or Clock()
        self.grammar = grammar
        self.stats = MockStats()
        self._attempts: dict[tuple[str, str], int] = {}
        self._page_cache: dict[str, tuple[str, ...]] = {}
        self._line_rules: dict[str, dict[str, list[tuple[int, KeywordRule]]]] = {}
        self._substring_rules: dict[str, list[tuple[int, KeywordRule, re.Pattern[str]]]] = {}
        for index, rule in enumerate(self.rules):
            if rule.match == MATCH_LINE:
                per_payload = self._line_rules.setdefault(rule.payload_id, {})
                per_payload.setdefault(rule.phrase, []).append((index, rule))
            else:
                pattern = re.compile(
                    rf"(?<!\w){re.escape(rule.phrase)}(?!\w)", re.IGNORECASE
                )
                self._substring_rules.setdefault(rule.payload_id, []).append(
                    (index, rule, pattern)
                )

    def attempt_count(self, unit_id: str, payload_id: str) -> int:
        return self._attempts.get((unit_id, payload_id), 0)

    def _pages(self, data_url: str) -> tuple[str, ...]:
        cached = self._page_cache.get(data_url)
        if cached is None:
            cached = tuple(extract_page_texts(decode_data_url(data_url)))
            self._page_cache[data_url] = cached
        return cached

    def _matches(self, payload_id: str, text: str) -> list[tuple[int, int, KeywordRule, str]]:
        """(position, rule index, rule, containing line) sorted by position."""
        found: list[tuple[int, int, KeywordRule, str]] = []
        line_rules = self._line_rules.get(payload_id, {})
        if line_rules:
            offset = 0
            for line in text.split("\n"):
                for index, rule in line_rules.get(line.strip(), ()):
                    found.append((offset, index, rule, line.strip()))
                offset += len(line) + 1
        for index, rule, pattern in self._substring_rules.get(payload_id, ()):
            for match in pattern.finditer(text):
                line_start = text.rfind("\n", 0, match.start()) + 1
                line_end = text.find("\n", match.start())
                if line_end == -1:
                    line_end = len(text)
                found.append((match.start(), index, rule, text[line_start:line_end].strip()))
        found.sort(key=lambda item: (item[0], item[1]))
        return found

    def _raw_values(self, payload: PayloadSchema, text: str) -> dict[str, Any]:
        raw: dict[str, Any] = {}
        evidence: dict[str, list[str]] = {}
        field_names = set(payload.field_names)
        for _, _, rule, line in self._matches(payload.id, text):
            if rule.field not in field_names:
                continue
            spec = payload.field_spec(rule.field)
            if spec.is_list:
                raw.setdefault(rule.field, [])
                raw[rule.field].append(rule.value)
            elif rule.field not in raw:
                raw[rule.field] = rule.value
            elif raw[rule.field] != rule.value:
                continue  # scalar already set by an earlier position; keep first
            if spec.evidence_partner is not None:
                sentence = rule.evidence_sentence if rule.evidence_sentence is not None else line
                evidence.setdefault(spec.evidence_partner, []).append(sentence)
        for partner, sentences in evidence.items():
            raw.setdefault(partner, [])
            raw[partner].extend(sentences)
        return raw

    def _render_page(
        self, page_index: int, text: str, include_images: bool
    ) -> tuple[str, list[ImageObject]]:
        paragraphs: list[str] = []
        images: list[ImageObject] = []
        ordinal = 0
        for line in text.split("\n"):
            if not line.strip():
                continue
            if include_images and self.grammar.matches(line):
                placeholder = f"img-p{page_index}-{ordinal}"
                paragraphs.append(f"![{placeholder}]({placeholder})")
                region = "table" if line.lstrip().lower().startswith("table") else "graph"
                images.append(
                    ImageObject(
                        bbox=(72, 72 + 40 * ordinal, 540, 112 + 40 * ordinal),
                        image_base64=TINY_PNG_BASE64,
                        description=line.strip(),
                        region_type=region,
                    )
                )
                ordinal += 1
            paragraphs.append(line)
        return "\n\n".join(paragraphs), images

    async def annotate(self, request: AnnotationRequest) -> UnitAnnotation:
        key = (request.unit_id, request.payload.id)
        attempt = self._attempts.get(key, 0) + 1
        self._attempts[key] = attempt
        self.stats.enter(self.clock.now())
        try:
            delay = self.latency.sample(
                f"{self.seed}:{request.unit_id}:{request.payload.id}:{attempt}"
            )
            if delay > 0:
                await self.clock.sleep(delay)
            fault = self.faults.lookup(request.unit_id, request.payload.id, attempt)
            if fault is not None:
                raise TransportError(fault, f"injected fault (status {fault})")
            page_markdowns: dict[int, str] = {}
            images: list[ImageObject] = []
            if request.pages is not None:
                pages = self._pages(request.data_url or "")
                start, end = request.pages
                covered = range(start, min(end, len(pages)))
                scan_text = "\n".join(pages[p] for p in covered)
                for page_index in covered:
                    markdown, page_images = self._render_page(
                        page_index, pages[page_index], request.include_images
                    )
                    page_markdowns[page_index] = markdown
                    images.extend(page_images)
            else:
                scan_text = request.caption_text or ""
            raw = self._raw_values(request.payload, scan_text)
            outcome = validate_annotation(request.payload, raw)
            return UnitAnnotation(
                parent=request.parent,
                unit_id=request.unit_id,
                payload_id=request.payload.id,
                values=outcome.values,
                page_markdowns=page_markdowns,
                images=images,
                conformance_ratio=outcome.conformance_ratio,
            )
        finally:
            self.stats.leave()


# --------------------------------------------------------------------------
# HTTP backend
# --------------------------------------------------------------------------


def _payload_wire_format(payload: PayloadSchema) -> dict[str, Any]:
    return {
        "id": payload.id,
        "title": payload.title,
        "fields": [
            {
                "name": spec.name,
                "kind": spec.kind,
                "description": spec.description,
                **({"vocabulary": list(spec.vocabulary)} if spec.vocabulary else {}),
                **({"evidence": spec.evidence_partner} if spec.evidence_partner else {}),
            }
            for spec in payload.fields
        ],
    }


class HttpBackend:
    """Remote annotation service speaking a small JSON protocol.

    ``POST {base}/annotate`` with the unit contents and the payload schema;
    the response carries ``values``, optional ``page_markdowns`` (keyed by
    page index) and optional ``images``.  A 200 response whose body carries
    an ``error`` key is treated as a failed call so quota messages surface
    through the normal retry policy.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str,
        *,
        timeout: float = 120.0,
        transport: httpx.AsyncBaseTransport | None = None,
    ) -> None:
        if not base_url:
            raise ConfigurationError("backend base URL must be non-empty")
        self._client = httpx.AsyncClient(
            base_url=base_url.rstrip("/"),
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=timeout,
            transport=transport,
        )

    @classmethod
    def from_env(cls, **kwargs: Any) -> "HttpBackend":
        base_url = os.environ.get(ENV_API_URL, "")
        api_key = os.environ.get(ENV_API_KEY, "")
        if not base_url or not api_key:
            raise ConfigurationError(
                f"the HTTP backend needs {ENV_API_URL} and {ENV_API_KEY} set"
            )
        return cls(base_url, api_key, **kwargs)

    async def aclose(self) -> None:
        await self._client.aclose()

    async def annotate(self, request: AnnotationRequest) -> UnitAnnotation:
        body: dict[str, Any] = {
            "source_key": request.parent,
            "unit_id": request.unit_id,
            "payload": _payload_wire_format(request.payload),
            "include_images": request.include_images,
        }
        if request.pages is not None:
            body["document"] = {"type": "document_url", "data_url": request.data_url}
            body["pages"] = list(request.pages)
        else:
            body["caption_text"] = request.caption_text
        try:
            response = await self._client.post("/annotate", json=body)
        except httpx.TimeoutException as exc:
            raise TransportError(0, f"timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise TransportError(0, f"transport failure: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(response.status_code, response.text[:500])
        try:
            data = response.json()
        except ValueError as exc:
            raise TransportError(200, f"unparseable response body: {exc}") from exc
        if isinstance(data, dict) and data.get("error"):
            raise TransportError(200, str(data["error"]))
        if not isinstance(data, dict):
            raise TransportError(200, "response body is not an object")
        outcome = validate_annotation(request.payload, data.get("values") or {})
        page_markdowns = {
            int(page): str(markdown)
            for page, markdown in (data.get("page_markdowns") or {}).items()
        }
        images = [
            ImageObject(
                bbox=tuple(int(v) for v in raw.get("bbox", (0, 0, 0, 0))),
                image_base64=str(raw.get("image_base64", "")),
                description=str(raw.get("description", "")),
                region_type=str(raw.get("region_type", "other")),
            )
            for raw in data.get("images") or []
        ]
        return UnitAnnotation(
            parent=request.parent,
            unit_id=request.unit_id,
            payload_id=request.payload.id,
            values=outcome.values,
            page_markdowns=page_markdowns,
            images=images,
            conformance_ratio=outcome.conformance_ratio,
        )
