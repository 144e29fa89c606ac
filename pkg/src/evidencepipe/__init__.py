"""Corpus-scale extraction of schema-constrained study records from PDF full texts."""

from __future__ import annotations

__version__ = "0.1.0"
