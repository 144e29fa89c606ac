"""Exception types shared across the pipeline."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(PipelineError):
    """A run was configured with invalid or inconsistent parameters."""


class SchemaDefinitionError(PipelineError):
    """A schema file is malformed or violates a structural rule."""


class SchemaVersionError(PipelineError):
    """An on-disk artifact was produced under an incompatible schema."""


class ExcludedDocument(PipelineError):
    """A document cannot enter the pipeline; the reason is the message."""


class EmptyDocumentError(ExcludedDocument):
    """A document file contained no bytes."""
