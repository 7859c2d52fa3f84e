"""
Classical intermittency and laser background.

Covers the independent-source mixture of photon statistics, the bright/dark
telegraph envelope, expected coincidence-peak areas for a pulse train, and
stochastic synthesis of two-detector click streams.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from correlations import pulse_statistics
from dynamics import (
    PulseShape,
    QuantumState,
    cavity_collapse_set,
    mc_ensemble,
    pulsed_hamiltonian,
)
from errors import ConfigurationError, CorrelationError, HistogramError
from hilbert import SystemParams, build_space
from sim_config import PS, DeviceDefaults, Estimator, StreamFormat

logger = logging.getLogger(__name__)

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
WEIGHT_TOLERANCE = 1e-12
TIME_SHARE_TOLERANCE = 1e-9
RECORD_DTYPE = np.dtype([("channel", "<u8"), ("time_ps", "<u8")])


# ========================= MODEL PARAMETERS =========================

class TelegraphParams(BaseModel):
    """Two-state Markov blinking with a single correlation time."""

    model_config = ConfigDict(frozen=True)

    mean_switch_time: float = Field(default=DeviceDefaults.SWITCH_TIME, gt=0.0)
    bright_fraction: float = Field(default=DeviceDefaults.BRIGHT_FRACTION, gt=0.0, le=1.0)

    def switch_probabilities(self, period: float) -> Tuple[float, float]:
        """Per-pulse transition probabilities (bright -> dark, dark -> bright)."""
        if not period > 0:
            raise ConfigurationError(f"Repetition period must be positive, got {period}")
        decay = 1.0 - math.exp(-period / self.mean_switch_time)
        f = self.bright_fraction
        return (1.0 - f) * decay, f * decay


class BackgroundModel(BaseModel):
    """
    Laser leakage through the cross-polarised detection.

    The rate is fixed by signal_to_noise at reference_detuning (None means the
    operating detuning) unless counts_per_pulse pins it directly.
    """

    model_config = ConfigDict(frozen=True)

    signal_to_noise: float = Field(default=DeviceDefaults.SIGNAL_TO_NOISE, gt=0.0)
    reference_detuning: Optional[float] = Field(default=None, description="rad/s")
    counts_per_pulse: Optional[float] = Field(default=None, ge=0.0)

    def per_pulse(self, signal_per_pulse: float) -> float:
        if self.counts_per_pulse is not None:
            return self.counts_per_pulse
        return signal_per_pulse / self.signal_to_noise


class MixtureWeights(BaseModel):
    """Shares of the detected flux from each source."""

    model_config = ConfigDict(frozen=True)

    p_bright: float = Field(ge=0.0, le=1.0)
    p_background: float = Field(ge=0.0, le=1.0)
    p_dark: float = Field(ge=0.0, le=1.0)

    @model_validator(mode="after")
    def check_normalised(self) -> "MixtureWeights":
        total = self.p_bright + self.p_background + self.p_dark
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"Mixture weights sum to {total!r}, expected 1")
        return self

    @classmethod
    def from_sources(cls, bright_mean: float, dark_mean: float,
                     tp: TelegraphParams, bg: BackgroundModel) -> "MixtureWeights":
        """
        Time-averaged flux shares from per-pulse detected means.

        Args:
            bright_mean: Mean detected counts of a bright-state pulse
            dark_mean: Mean detected counts of a dark-state pulse
            tp: Blinking statistics
            bg: Background model (its SNR refers to the same signal)
        """
        f = tp.bright_fraction
        bright = f * bright_mean
        dark = (1.0 - f) * dark_mean
        background = bg.per_pulse(bright + dark)
        total = bright + dark + background
        if not total > 0:
            raise CorrelationError("All sources are dark; mixture weights undefined")
        p_bright, p_dark = bright / total, dark / total
        return cls(p_bright=p_bright, p_dark=p_dark, p_background=max(0.0, 1.0 - p_bright - p_dark))

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.p_bright, self.p_background, self.p_dark


class MixtureComponent(NamedTuple):
    """Mean intensity and unnormalised zero-delay pair moment of one source."""
    intensity: float
    pairs: float


def mixture_g2(components: Sequence[MixtureComponent], weights: MixtureWeights) -> Tuple[float, float]:
    """
    Combine the bright, background and dark sources into one pulse statistic.

    components are ordered (bright, background, dark) like weights.as_tuple() and
    hold the per-pulse mean and pair moment of each source while it emits. The
    weights are shares of the detected flux. The emitter is either bright or
    dark, so the dot states enter linearly with their time shares
    t_i = p_i I / I_i. The background is always present and independent of the
    emitter, so the only cross term is 2 I_dot I_background (cross g² = 1).

    The mean I is fixed by the background (I = I_background / p_background) when
    it carries flux, otherwise by the dot time shares adding up to one. Time the
    dot shares leave over is spent emitting nothing.

    Returns:
        (G²(0) unnormalised, mean intensity)
    """
    if len(components) != 3:
        raise ConfigurationError(f"Expected bright, background and dark components, got {len(components)}")
    bright, background, dark = components
    p_bright, p_background, p_dark = weights.as_tuple()
    intensities = np.array([c.intensity for c in components], dtype=float)
    if np.any(intensities < 0):
        raise ConfigurationError("Component intensities must be non-negative")
    if not np.any(intensities > 0):
        raise CorrelationError("All component intensities are zero")
    for share, component in zip(weights.as_tuple(), components):
        if share > 0 and not component.intensity > 0:
            raise ConfigurationError("A component without intensity cannot carry a share of the flux")

    dot = ((p_bright, bright), (p_dark, dark))
    if p_background > 0:
        mean = background.intensity / p_background
    else:
        mean = 1.0 / sum(share / c.intensity for share, c in dot if share > 0)

    time_shares = [share * mean / c.intensity if share > 0 else 0.0 for share, c in dot]
    if sum(time_shares) > 1.0 + TIME_SHARE_TOLERANCE:
        raise ConfigurationError(f"Dot time shares add up to {sum(time_shares):.6f}; "
                                 "weights and component intensities disagree")
    dot_pairs = time_shares[0] * bright.pairs + time_shares[1] * dark.pairs
    dot_mean = (p_bright + p_dark) * mean
    background_mean = p_background * mean
    background_pairs = background.pairs if p_background > 0 else 0.0
    return dot_pairs + background_pairs + 2.0 * dot_mean * background_mean, mean


def telegraph_envelope(tp: TelegraphParams, lag):
    """Normalised bright-indicator correlation 1 + ((1 - f)/f) exp(-lag/T)."""
    lag = np.asarray(lag, dtype=float)
    if np.any(lag < 0):
        raise ConfigurationError("Telegraph lag must be non-negative")
    f = tp.bright_fraction
    value = 1.0 + (1.0 - f) / f * np.exp(-lag / tp.mean_switch_time)
    return float(value) if value.ndim == 0 else value


# ========================= PEAK PREDICTION =========================

@dataclass
class PeakPrediction:
    """Expected coincidence-peak areas for m = 0..m_max."""

    areas: np.ndarray
    plateau: float
    extrapolated_zero: float

    @property
    def g2_plateau(self) -> float:
        return float(self.areas[0] / self.plateau)

    @property
    def g2_nearest(self) -> float:
        return float(self.areas[0] / self.extrapolated_zero)


def predict_peaks(quantum_g2_zero: float, per_pulse_n: float, weights: MixtureWeights,
                  tp: TelegraphParams, m_max: int, period: float,
                  bg: Optional[BackgroundModel] = None, dark_g2: float = 1.0,
                  n_pulses: Optional[int] = None) -> PeakPrediction:
    """
    Analytic peak areas of the symmetric cross-channel histogram.

    Each pulse carries M = bright or dark emission plus background. Per pulse,
    area(0) = ½ E[M(M-1)] and area(m) = ½ E[M_k M_{k+m}], the bright/dark
    modulation entering through telegraph_envelope(m T₀).
    """
    if m_max < 3:
        raise ConfigurationError(f"m_max must be at least 3, got {m_max}")
    if per_pulse_n < 0:
        raise ConfigurationError("Mean counts per pulse must be non-negative")
    f = tp.bright_fraction
    bright_flux = weights.p_bright * per_pulse_n
    dark_flux = weights.p_dark * per_pulse_n
    if f >= 1.0 and dark_flux > 0:
        raise ConfigurationError("Dark-state flux requires a bright fraction below 1")
    mu_bright = bright_flux / f
    mu_dark = dark_flux / (1.0 - f) if f < 1.0 else 0.0
    signal = bright_flux + dark_flux
    background = bg.per_pulse(signal) if bg is not None else weights.p_background * per_pulse_n

    def independent(envelope: np.ndarray) -> np.ndarray:
        spread = mu_bright - mu_dark
        pulse_pairs = mu_dark ** 2 + 2.0 * f * mu_dark * spread + (f * spread) ** 2 * envelope
        return 0.5 * (pulse_pairs + 2.0 * background * signal + background ** 2)

    zero = 0.0
    total = signal + background
    if total > 0:
        p_bright, p_dark = bright_flux / total, dark_flux / total
        actual = MixtureWeights(p_bright=p_bright, p_dark=p_dark, p_background=background / total)
        components = (
            MixtureComponent(mu_bright, quantum_g2_zero * mu_bright ** 2),
            MixtureComponent(background, background ** 2),
            MixtureComponent(mu_dark, dark_g2 * mu_dark ** 2),
        )
        pairs, mean = mixture_g2(components, actual)
        if background == 0:
            # flux shares cannot carry an empty dark state; put its time back
            pairs *= signal / mean
        zero = 0.5 * pairs
    lags = np.arange(1, m_max + 1) * period
    areas = np.concatenate([[zero], independent(telegraph_envelope(tp, lags))])
    plateau = float(independent(np.array(1.0)))
    extrapolated = float(independent(np.array(telegraph_envelope(tp, 0.0))))
    if n_pulses is not None:
        if n_pulses < 1:
            raise ConfigurationError("n_pulses must be positive")
        scale = np.maximum(n_pulses - np.arange(m_max + 1), 0)
        areas = areas * scale
        plateau *= n_pulses
        extrapolated *= n_pulses
    return PeakPrediction(areas=areas, plateau=plateau, extrapolated_zero=extrapolated)


def peak_heights(quantum_g2_zero: float, per_pulse_n: float, weights: MixtureWeights,
                 tp: TelegraphParams, m_max: int, period: float,
                 bg: Optional[BackgroundModel] = None, dark_g2: float = 1.0,
                 n_pulses: Optional[int] = None) -> np.ndarray:
    """Expected peak areas for m = 0..m_max (see predict_peaks)."""
    return predict_peaks(quantum_g2_zero, per_pulse_n, weights, tp, m_max, period,
                         bg=bg, dark_g2=dark_g2, n_pulses=n_pulses).areas


# ========================= DETECTION =========================

class DetectorModel(BaseModel):
    """Detection efficiency, timing resolution and repetition period."""

    model_config = ConfigDict(frozen=True)

    efficiency: float = Field(default=DeviceDefaults.DETECTION_EFFICIENCY, gt=0.0, le=1.0)
    resolution_fwhm: float = Field(default=DeviceDefaults.TIME_RESOLUTION, ge=0.0)
    period: float = Field(default=DeviceDefaults.PERIOD, gt=0.0)

    @property
    def jitter_sigma(self) -> float:
        return self.resolution_fwhm / FWHM_PER_SIGMA

    def pulse_center(self, index):
        """Center of pulse k within the train."""
        return np.asarray(index) * self.period + 0.5 * self.period


@dataclass
class EmissionPool:
    """
    Output-channel emission times of simulated pulses, relative to the pulse center.

    Stored flat: trajectory i emitted at times[starts[i]:starts[i] + counts[i]].
    """

    times: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.size == 0:
            raise ConfigurationError("Emission pool is empty")
        if int(self.counts.sum()) != self.times.size:
            raise ConfigurationError("Emission pool counts do not match its times")
        self.starts = np.concatenate([[0], np.cumsum(self.counts)[:-1]]).astype(np.int64)

    @classmethod
    def from_trajectories(cls, per_trajectory: Sequence[np.ndarray], center: float) -> "EmissionPool":
        counts = np.array([t.size for t in per_trajectory], dtype=np.int64)
        times = np.concatenate(per_trajectory) - center if counts.sum() else np.zeros(0)
        return cls(times, counts)

    @property
    def size(self) -> int:
        return self.counts.size

    @property
    def mean(self) -> float:
        return float(self.counts.mean())

    @property
    def pair_moment(self) -> float:
        """E[N(N-1)]."""
        return float(np.mean(self.counts * (self.counts - 1)))

    @property
    def g2(self) -> float:
        if self.mean == 0:
            raise CorrelationError("Emission pool holds no photons")
        return self.pair_moment / self.mean ** 2

    def draw(self, rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """Sample n pulses; returns (pulse slot of each photon, emission offset)."""
        chosen = rng.integers(0, self.size, size=n)
        counts = self.counts[chosen]
        total = int(counts.sum())
        slots = np.repeat(np.arange(n), counts)
        first = np.cumsum(counts) - counts
        positions = np.repeat(self.starts[chosen] - first, counts) + np.arange(total)
        return slots, self.times[positions]


def emission_pool(params: SystemParams, pulse: PulseShape, detuning: float,
                  n_trajectories: int, seed: int, workers: int = 1) -> EmissionPool:
    """Run a trajectory ensemble for one pulse and keep its output-channel jumps."""
    detuned = params.at_probe_detuning(detuning)
    space = build_space(detuned.n_max)
    ensemble = mc_ensemble(
        QuantumState.vacuum(space),
        pulsed_hamiltonian(detuned, pulse, space),
        cavity_collapse_set(detuned, space),
        pulse.window(detuned.kappa),
        n_trajectories,
        seed,
        workers=workers,
    )
    pool = EmissionPool.from_trajectories(ensemble.output_times, pulse.center)
    logger.info(f"Emission pool (g={detuned.g:.3e}): {pool.size} pulses, mean {pool.mean:.4f} photons")
    return pool


def _pool_seed(seed: int, index: int) -> int:
    """Seed of pool index (0 bright, 1 dark) spawned from a stream seed."""
    return int(np.random.SeedSequence(seed).spawn(index + 1)[index].generate_state(1)[0])


def emission_pools(params: SystemParams, pulse: PulseShape, detuning: float, tp: TelegraphParams,
                   pool_size: int, seed: int,
                   workers: int = 1) -> Tuple[EmissionPool, Optional[EmissionPool]]:
    """
    Bright and dark pools exactly as synthesize_click_stream builds them for seed.

    The dark pool is None for an emitter that never blinks.
    """
    bright = emission_pool(params, pulse, detuning, pool_size, _pool_seed(seed, 0), workers)
    dark = None
    if tp.bright_fraction < 1.0:
        dark = emission_pool(params.dark(), pulse, detuning, pool_size, _pool_seed(seed, 1), workers)
    return bright, dark


# ========================= CLICK STREAMS =========================

@dataclass
class ClickStream:
    """Sorted detection times (integer picoseconds) of both HBT detectors."""

    channel0: np.ndarray
    channel1: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.channel0 = np.sort(np.asarray(self.channel0, dtype=np.uint64))
        self.channel1 = np.sort(np.asarray(self.channel1, dtype=np.uint64))

    @property
    def n_clicks(self) -> int:
        return int(self.channel0.size + self.channel1.size)

    def channel(self, index: int) -> np.ndarray:
        if index not in (0, 1):
            raise HistogramError(f"No detector channel {index}")
        return self.channel0 if index == 0 else self.channel1

    def to_records(self) -> np.ndarray:
        """Both channels merged in time order."""
        records = np.empty(self.n_clicks, dtype=RECORD_DTYPE)
        records["channel"] = np.concatenate([
            np.zeros(self.channel0.size, dtype=np.uint64), np.ones(self.channel1.size, dtype=np.uint64)
        ])
        records["time_ps"] = np.concatenate([self.channel0, self.channel1])
        order = np.lexsort((records["channel"], records["time_ps"]))
        return records[order]


def telegraph_states(tp: TelegraphParams, period: float, n_pulses: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Bright indicator per pulse: alternating geometric bright and dark runs."""
    p_leave_bright, p_leave_dark = tp.switch_probabilities(period)
    if p_leave_bright == 0.0:
        return np.ones(n_pulses, dtype=bool)
    states = np.empty(n_pulses, dtype=bool)
    bright = bool(rng.random() < tp.bright_fraction)
    filled = 0
    while filled < n_pulses:
        batch = 1024
        bright_runs = rng.geometric(p_leave_bright, size=batch)
        dark_runs = rng.geometric(p_leave_dark, size=batch)
        runs = np.empty(2 * batch, dtype=np.int64)
        first, second = (bright_runs, dark_runs) if bright else (dark_runs, bright_runs)
        runs[0::2], runs[1::2] = first, second
        labels = np.empty(2 * batch, dtype=bool)
        labels[0::2], labels[1::2] = bright, not bright
        expanded = np.repeat(labels, runs)
        take = min(expanded.size, n_pulses - filled)
        states[filled:filled + take] = expanded[:take]
        filled += take
    return states


def _signal_per_pulse(params: SystemParams, pulse: PulseShape, detuning: float,
                      tp: TelegraphParams, detector: DetectorModel) -> float:
    """Mean detected dot emission per pulse from the master equation."""
    f = tp.bright_fraction
    total = 0.0
    for share, state in ((f, params), (1.0 - f, params.dark())):
        if share == 0:
            continue
        try:
            total += share * pulse_statistics(state, pulse, detuning).mean_photons
        except CorrelationError:
            continue
    return detector.efficiency * total


def model_prediction(params: SystemParams, pulse: PulseShape, detuning: float,
                     tp: TelegraphParams, bg: BackgroundModel, detector: DetectorModel,
                     m_max: int, estimator: str = Estimator.INTEGRATED) -> PeakPrediction:
    """
    Peak areas per pulse predicted from the master equation, the mixture and the
    telegraph envelope, with no sampling noise.
    """
    f = tp.bright_fraction
    bright = pulse_statistics(params, pulse, detuning)
    mu_bright = detector.efficiency * bright.mean_photons
    mu_dark, dark_g2 = 0.0, 1.0
    if f < 1.0:
        try:
            dark = pulse_statistics(params.dark(), pulse, detuning)
            mu_dark, dark_g2 = detector.efficiency * dark.mean_photons, dark.g2_integrated
        except CorrelationError:
            logger.debug("Dark-state pulse is effectively empty at this detuning")
    if bg.counts_per_pulse is not None:
        background = bg.counts_per_pulse
    else:
        reference = bg.reference_detuning if bg.reference_detuning is not None else detuning
        background = bg.per_pulse(_signal_per_pulse(params, pulse, reference, tp, detector))
    return _source_peaks(mu_bright, bright.estimate(estimator), mu_dark, dark_g2, background,
                         tp, m_max, detector.period)


def pool_prediction(bright_pool: EmissionPool, dark_pool: Optional[EmissionPool], tp: TelegraphParams,
                    background: float, detector: DetectorModel, m_max: int) -> PeakPrediction:
    """
    Peak areas per pulse expected for a click stream drawn from these pools.

    Uses the pools' own photon-number moments, so finite-pool scatter shared by
    every peak is part of the expectation. Detection thins the counts
    binomially, which scales the mean by the efficiency and keeps g².
    """
    mu_bright, bright_g2 = _detected_moments(bright_pool, detector.efficiency)
    mu_dark, dark_g2 = 0.0, 1.0
    if dark_pool is not None and tp.bright_fraction < 1.0:
        mu_dark, dark_g2 = _detected_moments(dark_pool, detector.efficiency)
    return _source_peaks(mu_bright, bright_g2, mu_dark, dark_g2, background, tp, m_max, detector.period)


def _detected_moments(pool: EmissionPool, efficiency: float) -> Tuple[float, float]:
    if pool.mean == 0:
        return 0.0, 1.0
    return efficiency * pool.mean, pool.g2


def _source_peaks(mu_bright: float, bright_g2: float, mu_dark: float, dark_g2: float, background: float,
                  tp: TelegraphParams, m_max: int, period: float) -> PeakPrediction:
    f = tp.bright_fraction
    weights = MixtureWeights.from_sources(mu_bright, mu_dark, tp, BackgroundModel(counts_per_pulse=background))
    per_pulse = f * mu_bright + (1.0 - f) * mu_dark + background
    return predict_peaks(bright_g2, per_pulse, weights, tp, m_max, period, dark_g2=dark_g2)


def synthesize_click_stream(params: SystemParams, pulse: PulseShape, detuning: float,
                            tp: TelegraphParams, bg: BackgroundModel, n_pulses: int, seed: int,
                            detector: Optional[DetectorModel] = None,
                            pool_size: int = 2000, block_size: int = 100_000, workers: int = 1,
                            bright_pool: Optional[EmissionPool] = None,
                            dark_pool: Optional[EmissionPool] = None) -> ClickStream:
    """
    Stochastic HBT click stream for a train of n_pulses probe pulses.

    Bright pulses draw emission from a trajectory pool of the coupled system, dark
    pulses from a g -> 0 pool. Detection thinning, Poisson background shaped like
    the reflected pulse, a 50/50 split and detector jitter follow. The stream is a
    pure function of the seed.
    """
    if n_pulses < 1:
        raise ConfigurationError(f"n_pulses must be positive, got {n_pulses}")
    if block_size < 1:
        raise ConfigurationError(f"block_size must be positive, got {block_size}")
    detector = detector or DetectorModel()
    n_blocks = math.ceil(n_pulses / block_size)
    seeds = np.random.SeedSequence(seed).spawn(3 + n_blocks)

    if bright_pool is None:
        bright_pool = emission_pool(params, pulse, detuning, pool_size, _pool_seed(seed, 0), workers)
    if dark_pool is None and tp.bright_fraction < 1.0:
        dark_pool = emission_pool(params.dark(), pulse, detuning, pool_size, _pool_seed(seed, 1), workers)

    reference = bg.reference_detuning if bg.reference_detuning is not None else detuning
    if bg.counts_per_pulse is not None:
        background = bg.counts_per_pulse
    else:
        background = bg.per_pulse(_signal_per_pulse(params, pulse, reference, tp, detector))
    bright = telegraph_states(tp, detector.period, n_pulses, np.random.default_rng(seeds[2]))

    def run_block(block: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        rng = np.random.default_rng(seeds[3 + block])
        first = block * block_size
        indices = np.arange(first, min(first + block_size, n_pulses))
        times, sources = [], []
        for pool, mask, source in ((bright_pool, bright[indices], 0), (dark_pool, ~bright[indices], 2)):
            selected = indices[mask]
            if pool is None or selected.size == 0:
                continue
            slots, offsets = pool.draw(rng, selected.size)
            kept = rng.random(offsets.size) < detector.efficiency
            times.append(detector.pulse_center(selected[slots[kept]]) + offsets[kept])
            sources.append(np.full(int(kept.sum()), source, dtype=np.int8))
        noise = rng.poisson(background, size=indices.size)
        noise_pulses = np.repeat(indices, noise)
        sigma = pulse.fwhm / FWHM_PER_SIGMA
        times.append(detector.pulse_center(noise_pulses) + rng.normal(0.0, sigma, size=noise_pulses.size))
        sources.append(np.ones(noise_pulses.size, dtype=np.int8))

        clicks = np.concatenate(times)
        origin = np.concatenate(sources)
        channels = rng.integers(0, 2, size=clicks.size)
        if detector.jitter_sigma > 0:
            clicks = clicks + rng.normal(0.0, detector.jitter_sigma, size=clicks.size)
        stamps = np.rint(np.clip(clicks, 0.0, None) / PS).astype(np.int64)
        return channels, stamps, origin

    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            blocks = list(executor.map(run_block, range(n_blocks)))
    else:
        blocks = [run_block(block) for block in range(n_blocks)]

    channels = np.concatenate([b[0] for b in blocks])
    stamps = np.concatenate([b[1] for b in blocks])
    origin = np.concatenate([b[2] for b in blocks])
    source_counts = np.bincount(origin, minlength=3).astype(float)
    detected = source_counts.sum()
    metadata = {
        "n_pulses": int(n_pulses),
        "seed": int(seed),
        "period_ps": float(detector.period / PS),
        "bright_fraction_realized": float(bright.mean()),
        "counts_per_pulse": float(detected / n_pulses),
        "background_per_pulse": float(background),
        "bright_pool_mean": bright_pool.mean,
        "dark_pool_mean": dark_pool.mean if dark_pool is not None else 0.0,
    }
    if detected > 0:
        shares = source_counts / detected
        metadata["realized_weights"] = MixtureWeights(
            p_bright=float(shares[0]), p_dark=float(shares[2]),
            p_background=float(max(0.0, 1.0 - shares[0] - shares[2])),
        ).model_dump()
    logger.info(f"Synthesised {int(detected)} clicks over {n_pulses} pulses in {n_blocks} block(s)")
    return ClickStream(stamps[channels == 0], stamps[channels == 1], metadata)


def _infer_format(path: Path, fmt: Optional[str]) -> str:
    if fmt is None:
        fmt = StreamFormat.CSV if path.suffix.lower() == ".csv" else StreamFormat.BINARY
    if fmt not in StreamFormat.ALL:
        raise ConfigurationError(f"Unknown stream format: {fmt}")
    return fmt


def write_click_stream(stream: ClickStream, path: Union[str, Path], fmt: Optional[str] = None) -> Path:
    """
    Write time-ordered records.

    CSV: header `channel,time_ps`, one click per line. Binary: little-endian pairs
    of uint64 (channel, time_ps).
    """
    path = Path(path)
    fmt = _infer_format(path, fmt)
    records = stream.to_records()
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == StreamFormat.CSV:
        table = np.column_stack([records["channel"], records["time_ps"]])
        np.savetxt(path, table, fmt="%d", delimiter=",", header="channel,time_ps", comments="")
    else:
        records.tofile(path)
    logger.debug(f"Wrote {records.size} clicks to {path} ({fmt})")
    return path


def read_click_stream(path: Union[str, Path], fmt: Optional[str] = None) -> ClickStream:
    path = Path(path)
    if not path.exists():
        raise HistogramError(f"Click stream not found: {path}")
    fmt = _infer_format(path, fmt)
    if fmt == StreamFormat.CSV:
        with path.open("r", encoding="utf-8") as handle:
            header = handle.readline().strip()
        if header != "channel,time_ps":
            raise HistogramError(f"Unexpected click stream header: {header!r}")
        table = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.uint64, ndmin=2)
        channels, stamps = (table[:, 0], table[:, 1]) if table.size else (np.zeros(0), np.zeros(0))
    else:
        if path.stat().st_size % RECORD_DTYPE.itemsize:
            raise HistogramError(f"Binary click stream {path} has a truncated record")
        records = np.fromfile(path, dtype=RECORD_DTYPE)
        channels, stamps = records["channel"], records["time_ps"]
    if np.any(channels > 1):
        raise HistogramError(f"Click stream {path} references a channel other than 0 or 1")
    return ClickStream(stamps[channels == 0], stamps[channels == 1], {"source": str(path)})
