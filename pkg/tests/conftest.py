from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure project root on sys.path
ROOT_DIR = Path(__file__).resolve().parents[1]
if str(ROOT_DIR) not in sys.path:
    sys.path.insert(0, str(ROOT_DIR))

from complyctl.core.settings import get_settings
from complyctl.services.chain_model import load_chain
from complyctl.services.controller import load_controller_config

FIXTURES = ROOT_DIR / "complyctl" / "fixtures"
ARM5_Q0 = np.array([0.0, 0.3, 0.9, 0.3708, 0.0])


@pytest.fixture(autouse=True)
def clear_settings_cache(monkeypatch):
    for name in ("COMPLYCTL_ENV", "COMPLYCTL_LOG", "COMPLYCTL_SEED", "COMPLYCTL_OUT"):
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def arm5():
    return load_chain(FIXTURES / "arm5.json")


@pytest.fixture(scope="session")
def arm_config():
    return load_controller_config(FIXTURES / "controller.json")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
