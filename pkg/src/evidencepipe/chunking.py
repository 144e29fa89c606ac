"""Deterministic decomposition of documents into annotation units.

A document yields two kinds of units: fixed-size half-open page windows, and
caption blocks harvested from the page text returned for those windows.  Unit
identifiers embed the source key and the unit coordinates, so every extracted
value can be traced back to the pages (or the caption) it came from.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .errors import ConfigurationError

DEFAULT_PAGES_PER_CHUNK = 8


class UnitKind(str, Enum):
    PAGE_CHUNK = "page_chunk"
    CAPTION = "caption_unit"


@dataclass(frozen=True)
class DocumentUnit:
    """One independently annotatable slice of a document."""

    parent: str
    kind: UnitKind
    unit_id: str
    pages: tuple[int, int] | None = None
    caption_text: str | None = None
    caption_page: int | None = None
    caption_ordinal: int | None = None


def chunk_unit_id(parent: str, start: int, end: int) -> str:
    return f"{parent}:p{start}-{end}"


def caption_unit_id(parent: str, page: int, ordinal: int) -> str:
    return f"{parent}:c{page}.{ordinal}"


def page_chunk_unit(parent: str, start: int, end: int) -> DocumentUnit:
    if not (0 <= start < end):
        raise ConfigurationError(f"invalid page window [{start}, {end})")
    return DocumentUnit(
        parent=parent,
        kind=UnitKind.PAGE_CHUNK,
        unit_id=chunk_unit_id(parent, start, end),
        pages=(start, end),
    )


def caption_unit(parent: str, page: int, ordinal: int, text: str) -> DocumentUnit:
    if page < 0 or ordinal < 0:
        raise ConfigurationError("caption page and ordinal must be non-negative")
    if not text.strip():
        raise ConfigurationError("caption text must be non-empty")
    return DocumentUnit(
        parent=parent,
        kind=UnitKind.CAPTION,
        unit_id=caption_unit_id(parent, page, ordinal),
        caption_text=text,
        caption_page=page,
        caption_ordinal=ordinal,
    )


def plan_page_chunks(n_pages: int, pages_per_chunk: int) -> list[tuple[int, int]]:
    """Half-open page windows ``[0,k), [k,2k), ...`` covering all pages.

    Every chunk has exactly ``pages_per_chunk`` pages except possibly the
    last.  The windows partition ``range(n_pages)``.
    """
    if n_pages < 1:
        raise ConfigurationError(f"page count must be >= 1, got {n_pages}")
    if pages_per_chunk < 1:
        raise ConfigurationError(f"pages per chunk must be >= 1, got {pages_per_chunk}")
    return [
        (start, min(start + pages_per_chunk, n_pages))
        for start in range(0, n_pages, pages_per_chunk)
    ]


def build_chunk_units(
    parent: str, n_pages: int, pages_per_chunk: int = DEFAULT_PAGES_PER_CHUNK
) -> list[DocumentUnit]:
    return [
        page_chunk_unit(parent, start, end)
        for start, end in plan_page_chunks(n_pages, pages_per_chunk)
    ]


@dataclass(frozen=True)
class CaptionGrammar:
    """Shape of a caption opener: lead token, alphanumeric label, separator.

    The default recognises figure and table captions such as ``Figure 2.``,
    ``Fig. 3:``, ``Table 1 |`` and their ``Supplementary`` variants,
    case-insensitively.  Deployments with other conventions can supply their
    own compiled pattern.
    """

    pattern: re.Pattern[str]

    @classmethod
    def default(cls) -> "CaptionGrammar":
        lead = r"(?:Supplementary\s+)?(?:Figure|Fig\.|Table)"
        return cls(re.compile(rf"^\s*{lead}\s+[A-Za-z0-9]+\s*[.:|]", re.IGNORECASE))

    def matches(self, block: str) -> bool:
        return bool(self.pattern.match(block))


DEFAULT_CAPTION_GRAMMAR = CaptionGrammar.default()


def iter_caption_blocks(
    page_markdown: str, grammar: CaptionGrammar = DEFAULT_CAPTION_GRAMMAR
) -> list[str]:
    """Caption paragraphs of one page, in positional order, text verbatim.

    A block is a run of non-blank lines; the whole block is kept so captions
    wrapped over several lines stay intact.
    """
    captions: list[str] = []
    for paragraph in re.split(r"\n\s*\n", page_markdown):
        block = paragraph.strip("\n")
        if block.strip() and grammar.matches(block):
            captions.append(block.strip())
    return captions


def extract_caption_units(
    page_markdowns: Mapping[int, str],
    parent: str,
    grammar: CaptionGrammar = DEFAULT_CAPTION_GRAMMAR,
) -> list[DocumentUnit]:
    """Harvest caption units from per-page markdown, ordered by (page, position)."""
    units: list[DocumentUnit] = []
    for page in sorted(page_markdowns):
        for ordinal, text in enumerate(iter_caption_blocks(page_markdowns[page], grammar)):
            units.append(caption_unit(parent, page, ordinal, text))
    return units


_CHUNK_ID = re.compile(r"^p(\d+)-(\d+)$")
_CAPTION_ID = re.compile(r"^c(\d+)\.(\d+)$")


def unit_sort_key(unit_id: str) -> tuple[int, int, int]:
    """Document order: page chunks by start page, then captions by (page, ordinal)."""
    _, _, tail = unit_id.rpartition(":")
    match = _CHUNK_ID.match(tail)
    if match:
        return (0, int(match.group(1)), int(match.group(2)))
    match = _CAPTION_ID.match(tail)
    if match:
        return (1, int(match.group(1)), int(match.group(2)))
    raise ValueError(f"unrecognised unit id {unit_id!r}")


def sort_units(unit_ids: Sequence[str]) -> list[str]:
    return sorted(unit_ids, key=unit_sort_key)
