"""
Run configuration: a YAML document of pydantic sections.

Human-facing rates are GHz/2π, times are ps or ns as named; every conversion to SI
happens in the accessor methods below.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from blinking import BackgroundModel, DetectorModel, TelegraphParams
from dynamics import PulseShape
from errors import ConfigurationError
from hilbert import SystemParams
from sim_config import (
    NS,
    PS,
    DeviceDefaults,
    Estimator,
    Preset,
    StreamFormat,
    settings,
)

logger = logging.getLogger(__name__)


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SystemSection(Section):
    g_ghz: float = Field(default=DeviceDefaults.G_GHZ, ge=0.0)
    kappa_ghz: float = Field(default=DeviceDefaults.KAPPA_GHZ, gt=0.0)
    gamma_ghz: float = Field(default=DeviceDefaults.GAMMA_GHZ, ge=0.0)
    emitter_detuning_ghz: float = Field(default=0.0, description="wa - w0")
    n_max: int = Field(default=DeviceDefaults.N_MAX, ge=1)


class DriveSection(Section):
    target_n: float = Field(default=DeviceDefaults.TARGET_N, gt=0.0)
    calibration_detuning: float = Field(default=1.0, description="Units of g")


class PulseSection(Section):
    fwhm_ps: float = Field(default=DeviceDefaults.PULSE_FWHM / PS, gt=0.0)
    target_n: float = Field(default=DeviceDefaults.TARGET_N, gt=0.0, description="Peak intracavity <n>")
    calibration_detuning: float = Field(default=1.0, description="Units of g")
    estimator: str = Estimator.INTEGRATED


class BlinkingSection(Section):
    enabled: bool = True
    bright_fraction: float = Field(default=DeviceDefaults.BRIGHT_FRACTION, gt=0.0, le=1.0)
    switch_time_ns: float = Field(default=DeviceDefaults.SWITCH_TIME / NS, gt=0.0)


class BackgroundSection(Section):
    enabled: bool = True
    signal_to_noise: float = Field(default=DeviceDefaults.SIGNAL_TO_NOISE, gt=0.0)
    reference_detuning: Optional[float] = Field(default=None, description="Units of g; None = operating point")


class DetectorSection(Section):
    efficiency: float = Field(default=DeviceDefaults.DETECTION_EFFICIENCY, gt=0.0, le=1.0)
    resolution_ps: float = Field(default=DeviceDefaults.TIME_RESOLUTION / PS, ge=0.0)
    period_ns: float = Field(default=DeviceDefaults.PERIOD / NS, gt=0.0)


class SweepSection(Section):
    start: float = Field(default=-3.0, description="Units of g")
    stop: float = Field(default=3.0, description="Units of g")
    points: int = Field(default=121, ge=1)
    detuning: float = Field(default=0.0, description="Operating detuning, units of g")
    tau_max_ps: float = Field(default=50.0, gt=0.0)
    tau_points: int = Field(default=201, ge=2)

    def grid(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)

    def tau_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.tau_max_ps * PS, self.tau_points)


class HbtSection(Section):
    pulses: int = Field(default=1_000_000, ge=1)
    pool_size: int = Field(default=2000, ge=1)
    block_size: int = Field(default=100_000, ge=1)
    bin_width_ps: float = Field(default=100.0, gt=0.0)
    m_max: int = Field(default=DeviceDefaults.M_MAX, ge=4)
    write_stream: bool = False
    stream_format: str = StreamFormat.BINARY


class TransistorSection(Section):
    signal_fraction: float = Field(default=0.1, gt=0.0, description="Signal amplitude / gate amplitude")
    settle_lifetimes: float = Field(default=20.0, gt=0.0)
    beat_periods: int = Field(default=4, ge=1)


class RunConfig(Section):
    """Complete description of one simulator run."""

    name: str = "custom"
    seed: int = 20240101
    workers: int = Field(default_factory=lambda: settings.default_workers, ge=1)
    plot: bool = False
    output_dir: str = Field(default_factory=lambda: settings.output_dir)
    system: SystemSection = Field(default_factory=SystemSection)
    drive: DriveSection = Field(default_factory=DriveSection)
    pulse: PulseSection = Field(default_factory=PulseSection)
    blinking: BlinkingSection = Field(default_factory=BlinkingSection)
    background: BackgroundSection = Field(default_factory=BackgroundSection)
    detector: DetectorSection = Field(default_factory=DetectorSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    hbt: HbtSection = Field(default_factory=HbtSection)
    transistor: TransistorSection = Field(default_factory=TransistorSection)

    # ---------- serialisation ----------

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        try:
            config = cls.model_validate(data or {})
        except ValidationError as e:
            raise ConfigurationError(f"Invalid run configuration: {e}") from e
        config.check()
        return config

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Malformed YAML configuration: {e}") from e
        if data is not None and not isinstance(data, dict):
            raise ConfigurationError("Configuration root must be a mapping")
        return cls.from_dict(data or {})

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"Configuration file not found: {path}")
        logger.debug(f"Loading configuration from {path}")
        return cls.from_yaml(path.read_text(encoding="utf-8"))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)

    def config_hash(self) -> str:
        """First 12 hex digits of the SHA-256 of the canonical JSON dump."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def check(self) -> None:
        if self.pulse.estimator not in Estimator.ALL:
            raise ConfigurationError(f"Unknown pulsed estimator: {self.pulse.estimator}")
        if self.hbt.stream_format not in StreamFormat.ALL:
            raise ConfigurationError(f"Unknown stream format: {self.hbt.stream_format}")
        if self.sweep.stop < self.sweep.start:
            raise ConfigurationError("Sweep stop must not precede start")

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Apply dotted-key overrides such as {"system.g_ghz": 0.0}."""
        data = self.model_dump(mode="json")
        for dotted, value in overrides.items():
            if value is None:
                continue
            node = data
            *parents, leaf = dotted.split(".")
            for key in parents:
                node = node[key]
            node[leaf] = value
        return RunConfig.from_dict(data)

    # ---------- physics accessors ----------

    def system_params(self) -> SystemParams:
        s = self.system
        return SystemParams.from_ghz(
            g=s.g_ghz, kappa=s.kappa_ghz, gamma=s.gamma_ghz,
            delta_a=s.emitter_detuning_ghz, n_max=s.n_max,
        )

    def detuning_unit(self) -> float:
        return self.system_params().detuning_unit

    def to_rad(self, detuning_over_g: float) -> float:
        return float(detuning_over_g) * self.detuning_unit()

    def pulse_shape(self, peak_amp: float = 0.0) -> PulseShape:
        return PulseShape(fwhm=self.pulse.fwhm_ps * PS, center=0.0, peak_amp=peak_amp)

    def telegraph(self) -> TelegraphParams:
        if not self.blinking.enabled:
            return TelegraphParams(mean_switch_time=self.blinking.switch_time_ns * NS, bright_fraction=1.0)
        return TelegraphParams(mean_switch_time=self.blinking.switch_time_ns * NS,
                               bright_fraction=self.blinking.bright_fraction)

    def background_model(self, operating_detuning: float) -> BackgroundModel:
        """Background pinned by SNR at the reference (default: operating) detuning, in rad/s."""
        if not self.background.enabled:
            return BackgroundModel(counts_per_pulse=0.0)
        reference = self.background.reference_detuning
        return BackgroundModel(
            signal_to_noise=self.background.signal_to_noise,
            reference_detuning=self.to_rad(reference) if reference is not None else operating_detuning,
        )

    def detector_model(self) -> DetectorModel:
        return DetectorModel(
            efficiency=self.detector.efficiency,
            resolution_fwhm=self.detector.resolution_ps * PS,
            period=self.detector.period_ns * NS,
        )


def preset_path(name: str, preset_dir: Optional[Union[str, Path]] = None) -> Path:
    if name not in Preset.ALL:
        raise ConfigurationError(f"Unknown preset '{name}'; choose from {', '.join(Preset.ALL)}")
    directory = Path(preset_dir or settings.presets_dir)
    return directory / f"{name}.yml"


def load_preset(name: str, preset_dir: Optional[Union[str, Path]] = None) -> RunConfig:
    config = RunConfig.load(preset_path(name, preset_dir))
    if config.name != name:
        logger.warning(f"Preset file {name}.yml declares name '{config.name}'")
    return config


def list_presets(preset_dir: Optional[Union[str, Path]] = None) -> List[str]:
    directory = Path(preset_dir or settings.presets_dir)
    return [name for name in Preset.ALL if (directory / f"{name}.yml").is_file()]
