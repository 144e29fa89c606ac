"""Corpus discovery, canonical identifiers, page counting and the resume index."""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import EmptyDocumentError, ExcludedDocument

logger = logging.getLogger(__name__)

DATA_URL_PREFIX = "data:application/pdf;base64,"

_WHITESPACE_RUN = re.compile(r"\s+")
# stream payloads may contain arbitrary bytes; drop them before scanning
_STREAM_SPAN = re.compile(rb"stream\r?\n.*?endstream", re.DOTALL)
# \b rejects /Pages: the trailing "s" is a word character
_PAGE_MARKER = re.compile(rb"/Type\s*/Page\b")
_PAGES_COUNT = re.compile(rb"/Type\s*/Pages\b[^>]*?/Count\s+(\d+)")


def canonical_id(identifier: str) -> str:
    """Normalize a document identifier so lookups are stable across sources.

    Unicode composition and case folding are iterated to a fixed point:
    folding can expose new composition opportunities (ligatures followed by
    combining marks), and a single pass would not be idempotent.
    """
    text = identifier
    previous: str | None = None
    while text != previous:
        previous = text
        text = unicodedata.normalize("NFC", text).casefold()
    text = text.replace("\\", "/")
    return _WHITESPACE_RUN.sub(" ", text).strip()


def source_key(canonical: str) -> str:
    """Stable 40-hex-digit key for a canonical identifier."""
    return hashlib.sha1(canonical.encode("utf-8")).hexdigest()


def encode_data_url(pdf_bytes: bytes) -> str:
    if not pdf_bytes:
        raise EmptyDocumentError("document has zero bytes")
    return DATA_URL_PREFIX + base64.b64encode(pdf_bytes).decode("ascii")


def decode_data_url(data_url: str) -> bytes:
    if not data_url.startswith(DATA_URL_PREFIX):
        raise ValueError("not an application/pdf data URL")
    return base64.b64decode(data_url[len(DATA_URL_PREFIX):])


def page_count(pdf_bytes: bytes) -> int:
    """Count pages by structural inspection of the PDF object graph.

    Raises :class:`ExcludedDocument` for files that are not parseable PDFs or
    report zero pages; callers log these and skip the document.
    """
    if not pdf_bytes:
        raise EmptyDocumentError("document has zero bytes")
    if b"%PDF-" not in pdf_bytes[:1024]:
        raise ExcludedDocument("missing %PDF header")
    body = _STREAM_SPAN.sub(b"", pdf_bytes)
    count = len(_PAGE_MARKER.findall(body))
    if count <= 0:
        # fall back to the page-tree /Count entry
        match = _PAGES_COUNT.search(body)
        count = int(match.group(1)) if match else 0
    if count <= 0:
        raise ExcludedDocument("no page objects found")
    return count


def discover(root: str | Path) -> list[Path]:
    """All ``*.pdf`` files under ``root``, ordered by canonical identifier."""
    root = Path(root)
    if not root.is_dir():
        raise ExcludedDocument(f"corpus root {root} is not a directory")
    found: list[Path] = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in filenames:
            if name.lower().endswith(".pdf"):
                found.append(Path(dirpath) / name)
    found.sort(key=lambda p: canonical_id(str(p.relative_to(root))))
    return found


@dataclass(frozen=True)
class DocumentDescriptor:
    """Everything the pipeline needs to know about one source document."""

    path: Path
    canonical: str
    key: str
    page_count: int
    data_url: str


def describe_document(path: str | Path, root: str | Path) -> DocumentDescriptor:
    """Read, identify and page-count one document.

    The canonical identifier is derived from the path relative to the corpus
    root so keys do not depend on where the corpus is mounted.
    """
    path = Path(path)
    canonical = canonical_id(str(path.relative_to(root)))
    raw = path.read_bytes()
    pages = page_count(raw)
    return DocumentDescriptor(
        path=path,
        canonical=canonical,
        key=source_key(canonical),
        page_count=pages,
        data_url=encode_data_url(raw),
    )


@dataclass(frozen=True)
class IndexEntry:
    key: str
    completed_at: str
    schema_version: str
    unit_count: int


class ProcessedIndex:
    """Append-only record of completed documents, persisted as JSON lines.

    Entries are never mutated; re-marking an existing key is a no-op so the
    on-disk file stays append-only even across crashes and reruns.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._entries: dict[str, IndexEntry] = {}

    @classmethod
    def load(cls, path: str | Path) -> "ProcessedIndex":
        index = cls(path)
        if index.path.exists():
            with open(index.path, "r", encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    data = json.loads(line)
                    entry = IndexEntry(
                        key=data["key"],
                        completed_at=data["completed_at"],
                        schema_version=data["schema_version"],
                        unit_count=int(data["unit_count"]),
                    )
                    # first write wins; later duplicates are ignored
                    self_entry = index._entries.get(entry.key)
                    if self_entry is None:
                        index._entries[entry.key] = entry
        return index

    def is_processed(self, key: str) -> bool:
        return key in self._entries

    def entry(self, key: str) -> IndexEntry | None:
        return self._entries.get(key)

    def mark_processed(
        self, key: str, *, completed_at: str, schema_version: str, unit_count: int
    ) -> None:
        if key in self._entries:
            return
        entry = IndexEntry(
            key=key,
            completed_at=completed_at,
            schema_version=schema_version,
            unit_count=unit_count,
        )
        self._entries[key] = entry
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(
                json.dumps(
                    {
                        "key": entry.key,
                        "completed_at": entry.completed_at,
                        "schema_version": entry.schema_version,
                        "unit_count": entry.unit_count,
                    },
                    ensure_ascii=True,
                )
                + "\n"
            )

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[IndexEntry]:
        return iter(self._entries.values())
