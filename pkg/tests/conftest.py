"""Shared fixtures for the test suite."""

from __future__ import annotations

import pytest

from evidencepipe.schema import SchemaSet, load_schema_set


@pytest.fixture(scope="session")
def schema_set() -> SchemaSet:
    return load_schema_set()
