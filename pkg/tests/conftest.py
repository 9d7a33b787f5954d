from __future__ import annotations

from pathlib import Path

import pytest

from lta.eval import build_trial, builtin_scenarios, load_scenario

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def scenarios():
    """id -> parsed Scenario for every bundled scenario file."""
    return {sid: load_scenario(path) for sid, path in builtin_scenarios().items()}


@pytest.fixture
def trial(scenarios):
    """Factory for a fresh (world, graph) pair of a given scenario trial."""

    def make(sid: str, index: int = 0):
        return build_trial(scenarios[sid], index)

    return make
