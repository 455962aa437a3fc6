from __future__ import annotations

import pytest

from behaviordfa.catalog import default_catalog
from behaviordfa.dfa import build_dfa

from helpers import PATTERN_A, PATTERN_B, make_trace


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def seed_patterns():
    return [
        make_trace(PATTERN_A, trace_id="seed-a", label="malicious"),
        make_trace(PATTERN_B, trace_id="seed-b", label="malicious"),
    ]


@pytest.fixture(scope="session")
def seed_dfa(seed_patterns, catalog):
    return build_dfa(seed_patterns, catalog)
