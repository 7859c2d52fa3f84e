"""
Configuration module for the photon blockade simulator.
Uses pydantic-settings for environment variable management.
"""

import math

from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field


class Settings(BaseSettings):
    """Process-level settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="BLOCKADE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging
    log_level: str = Field(default="INFO", description="Logging level")
    log_file: str = Field(default="logs/blockade.log", description="Log file path")

    # Run registry
    database_url: str = Field(default="sqlite:///./runs.db", description="Run registry database URL")
    record_runs: bool = Field(default=True, description="Record every CLI invocation in the run registry")

    # Execution
    default_workers: int = Field(default=1, description="Worker threads for sweeps when --workers is not given")
    show_progress: bool = Field(default=False, description="Show tqdm progress bars for sweeps")

    # Files
    output_dir: str = Field(default="output", description="Default output directory")
    presets_dir: str = Field(default="presets", description="Directory holding figure presets")
    plot_dpi: int = Field(default=150, description="Resolution of rendered plots")


# Create settings instance
settings = Settings()


# Constants
GHZ = 2.0 * math.pi * 1.0e9
"""rad/s per GHz/2π: every human-entered rate is multiplied by this exactly."""

PS = 1.0e-12
NS = 1.0e-9


def ghz_to_rad(value_ghz: float) -> float:
    """Convert a GHz/2π rate to rad/s."""
    return value_ghz * GHZ


def rad_to_ghz(value_rad: float) -> float:
    """Convert a rad/s rate to GHz/2π."""
    return value_rad / GHZ


class DeviceDefaults:
    """Operating point of the reference experiment."""
    G_GHZ = 16.0
    KAPPA_GHZ = 16.0
    GAMMA_GHZ = 0.1
    N_MAX = 6
    TARGET_N = 0.4
    PULSE_FWHM = 40.0 * PS
    PERIOD = 12.5 * NS
    BRIGHT_FRACTION = 0.8
    SWITCH_TIME = 200.0 * NS
    SIGNAL_TO_NOISE = 6.0
    TIME_RESOLUTION = 300.0 * PS
    DETECTION_EFFICIENCY = 0.05
    M_MAX = 40


class Branch:
    """Dressed-state branches."""
    PLUS = "+"
    MINUS = "-"

    ALL = [PLUS, MINUS]


class StateKind:
    """Quantum state representations."""
    KET = "ket"
    DENSITY = "density"

    ALL = [KET, DENSITY]


class CurveKind:
    """Quantities stored in a correlation curve."""
    G2 = "g2"
    INTENSITY = "intensity"

    ALL = [G2, INTENSITY]


class Axis:
    """Abscissa of a correlation curve."""
    TAU_SECONDS = "tau_seconds"
    DETUNING_OVER_G = "detuning_over_g"

    ALL = [TAU_SECONDS, DETUNING_OVER_G]


class Estimator:
    """Pulse-averaged zero-delay correlation estimators."""
    INTEGRATED = "integrated"
    INSTANTANEOUS = "instantaneous"

    ALL = [INTEGRATED, INSTANTANEOUS]


class NormalizationMode:
    """Normalization constants for coincidence peaks."""
    PLATEAU = "plateau"
    NEAREST_NEIGHBOR = "nearest_neighbor"

    ALL = [PLATEAU, NEAREST_NEIGHBOR]


class StreamFormat:
    """Click stream file layouts."""
    CSV = "csv"
    BINARY = "binary"

    ALL = [CSV, BINARY]


class Preset:
    """Figure presets shipped in presets/."""
    FIG2B = "fig2b"
    FIG2C = "fig2c"
    FIG2D = "fig2d"
    FIG3 = "fig3"
    FIG4 = "fig4"
    TRANSISTOR_SWEEP = "transistor-sweep"

    ALL = [FIG2B, FIG2C, FIG2D, FIG3, FIG4, TRANSISTOR_SWEEP]


class RunStatus:
    """Run registry status values."""
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"

    ALL = [RUNNING, SUCCEEDED, FAILED]


class ExitCode:
    """Process exit codes."""
    OK = 0
    USAGE = 1
    NUMERICAL = 2
