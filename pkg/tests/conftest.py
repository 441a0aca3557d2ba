"""Shared fixtures: small scenarios that run in well under a second."""
from pathlib import Path

import pytest
import yaml

from sugarsim.config import ScenarioConfig, parse_scenario


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    """Scenario loading honours SUGARSIM_* overrides; tests must not see them."""
    for name in ("SUGARSIM_SEED", "SUGARSIM_STEPS", "SUGARSIM_POPULATION",
                 "SUGARSIM_OUT_DIR", "SUGARSIM_JOBS", "SUGARSIM_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def small_config() -> ScenarioConfig:
    """Default economy with 40 farmers split over two localities."""
    return parse_scenario({
        "name": "small",
        "population": {"size": 40, "locality_size": 20},
        "steps": 6,
        "seed": 7,
    })


@pytest.fixture
def scenario_file(tmp_path) -> Path:
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump({
        "name": "tiny",
        "population": {"size": 20, "locality_size": 10},
        "steps": 3,
        "seed": 1,
    }))
    return path
