"""
Shared fixtures: small systems that solve quickly, and an isolated settings
environment (registry database, log file and output directory under tmp_path).
"""

from pathlib import Path

import pytest

from hilbert import SystemParams, build_space
from sim_config import settings

PRESETS_DIR = Path(__file__).resolve().parents[1] / "presets"


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "database_url", f"sqlite:///{tmp_path / 'runs.db'}")
    monkeypatch.setattr(settings, "log_file", str(tmp_path / "logs" / "blockade.log"))
    monkeypatch.setattr(settings, "output_dir", str(tmp_path / "output"))
    monkeypatch.setattr(settings, "presets_dir", str(PRESETS_DIR))
    monkeypatch.setattr(settings, "show_progress", False)
    monkeypatch.setattr(settings, "default_workers", 1)
    yield


@pytest.fixture
def device_params() -> SystemParams:
    """g/2π = κ/2π = 16 GHz, γ/2π = 0.1 GHz, n_max = 6."""
    return SystemParams.device()


@pytest.fixture
def small_params() -> SystemParams:
    """Same rates with a cutoff of 4 photons."""
    return SystemParams.device(n_max=4)


@pytest.fixture
def small_space(small_params):
    return build_space(small_params.n_max)
