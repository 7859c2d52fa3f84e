"""
Hanbury-Brown-Twiss analysis: cross-channel coincidence histograms, peak areas,
the exponential blinking-envelope fit and the two g² normalisations.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import least_squares

from blinking import ClickStream
from errors import ConfigurationError, CorrelationError, FitError, HistogramError
from sim_config import PS, DeviceDefaults, NormalizationMode

logger = logging.getLogger(__name__)

CHUNK_CLICKS = 50_000
MIN_FIT_PEAKS = 4


@dataclass
class CoincidenceHistogram:
    """
    Symmetric histogram of cross-channel delays.

    Bin i covers [(i - K) w, (i - K + 1) w) with K = floor(max_lag / w) + 1.
    """

    bin_width: float
    counts: np.ndarray
    period: float
    max_lag: float

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 0):
            raise HistogramError("Histogram counts must be non-negative")
        if not self.bin_width > 0 or not self.period > 0:
            raise ConfigurationError("Bin width and period must be positive")

    @property
    def offset(self) -> int:
        return self.counts.size // 2

    @property
    def left_edges(self) -> np.ndarray:
        return (np.arange(self.counts.size) - self.offset) * self.bin_width

    @property
    def centers(self) -> np.ndarray:
        return self.left_edges + 0.5 * self.bin_width

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def peak_area(self, m: int) -> int:
        """Counts whose bin center lies within ±T₀/4 of m T₀."""
        center = m * self.period
        half = 0.25 * self.period
        if abs(center) + half > self.max_lag + self.bin_width:
            raise HistogramError(f"Peak m={m} lies outside the histogram range ±{self.max_lag:.3e} s")
        mask = (self.centers >= center - half) & (self.centers < center + half)
        return int(self.counts[mask].sum())

    def peak_areas(self, m_max: int) -> np.ndarray:
        return np.array([self.peak_area(m) for m in range(m_max + 1)], dtype=float)

    def to_rows(self) -> List[Tuple[float, int]]:
        return [(float(c), int(n)) for c, n in zip(self.centers, self.counts)]


def _delay_bins(start: np.ndarray, stop: np.ndarray, lag_ps: int, width_ps: int, offset: int,
                n_bins: int) -> np.ndarray:
    """Bin every stop - start delay within ±lag_ps, plus its mirror."""
    low = np.searchsorted(stop, start - lag_ps, side="left")
    high = np.searchsorted(stop, start + lag_ps, side="right")
    per_click = high - low
    total = int(per_click.sum())
    if total == 0:
        return np.zeros(n_bins, dtype=np.int64)
    first = np.cumsum(per_click) - per_click
    partners = np.repeat(low - first, per_click) + np.arange(total)
    delays = stop[partners] - np.repeat(start, per_click)
    forward = np.floor_divide(delays, width_ps) + offset
    backward = np.floor_divide(-delays, width_ps) + offset
    return (np.bincount(forward, minlength=n_bins) + np.bincount(backward, minlength=n_bins)).astype(np.int64)


def build_histogram(stream: ClickStream, bin_width: float, max_lag: float,
                    period: Optional[float] = None, workers: int = 1) -> CoincidenceHistogram:
    """
    Full (all-pairs) cross-correlation of the two detector channels.

    Every ordered pair (channel 0 click, channel 1 click) with |Δt| <= max_lag is
    counted at Δt and at -Δt, so the total is twice the number of such pairs.
    """
    if not bin_width > 0 or not max_lag > 0:
        raise ConfigurationError("bin_width and max_lag must be positive")
    if stream.channel0.size == 0 or stream.channel1.size == 0:
        raise HistogramError("Both detector channels need at least one click")
    if period is None:
        period_ps = stream.metadata.get("period_ps")
        period = period_ps * PS if period_ps else DeviceDefaults.PERIOD

    width_ps = max(1, int(round(bin_width / PS)))
    lag_ps = int(round(max_lag / PS))
    offset = lag_ps // width_ps + 1
    n_bins = 2 * offset
    start = np.sort(stream.channel0.astype(np.int64))
    stop = np.sort(stream.channel1.astype(np.int64))

    slices = [start[i:i + CHUNK_CLICKS] for i in range(0, start.size, CHUNK_CLICKS)]

    def accumulate(chunk: np.ndarray) -> np.ndarray:
        return _delay_bins(chunk, stop, lag_ps, width_ps, offset, n_bins)

    if workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            counts = sum(executor.map(accumulate, slices))
    else:
        counts = sum(accumulate(chunk) for chunk in slices)
    histogram = CoincidenceHistogram(width_ps * PS, counts, period, lag_ps * PS)
    logger.info(f"Histogram: {n_bins} bins of {width_ps} ps, {histogram.total} counts")
    return histogram


# ========================= ENVELOPE FIT =========================

@dataclass
class EnvelopeFit:
    """G²(m T₀) = (G0 - Ginf) exp(-m T₀ / T) + Ginf fitted to peaks m >= 1."""

    G0: float
    Ginf: float
    T: float
    residual: float
    G0_err: float
    Ginf_err: float
    T_err: float
    identifiable: bool
    m_range: Tuple[int, int]
    period: float

    def as_dict(self) -> Dict[str, float]:
        return {
            "G0": self.G0, "G0_err": self.G0_err,
            "Ginf": self.Ginf, "Ginf_err": self.Ginf_err,
            "T_seconds": self.T, "T_err_seconds": self.T_err,
            "reduced_chi2": self.residual,
            "identifiable": self.identifiable,
            "m_min": self.m_range[0], "m_max": self.m_range[1],
        }


def _flat_fit(m: np.ndarray, areas: np.ndarray, period: float) -> EnvelopeFit:
    variance = np.maximum(areas, 1.0)
    weights = 1.0 / variance
    level = float(np.sum(weights * areas) / np.sum(weights))
    error = float(math.sqrt(1.0 / np.sum(weights)))
    chi2 = float(np.sum((areas - level) ** 2 / variance)) / max(areas.size - 1, 1)
    logger.warning("Blinking time unidentifiable: envelope amplitude not significant, using plateau only")
    return EnvelopeFit(level, level, float("nan"), chi2, error, error, float("nan"),
                       False, (int(m[0]), int(m[-1])), period)


def fit_peak_areas(m: Sequence[int], areas: Sequence[float], period: float,
                   max_nfev: int = 2000) -> EnvelopeFit:
    """
    Poisson-weighted least squares of the blinking envelope.

    The fit runs on areas divided by their mean, so scaling all areas leaves T
    unchanged; standard errors come from the Jacobian in count units.
    """
    m = np.asarray(m, dtype=float)
    areas = np.asarray(areas, dtype=float)
    if m.size < MIN_FIT_PEAKS:
        raise ConfigurationError(f"Envelope fit needs at least {MIN_FIT_PEAKS} peaks, got {m.size}")
    if np.any(m < 1):
        raise ConfigurationError("Envelope fit uses peaks m >= 1 only")
    if np.any(areas <= 0):
        raise FitError("Peak areas must be positive for the envelope fit")
    if np.ptp(areas) == 0:
        return _flat_fit(m, areas, period)

    scale = float(areas.mean())
    data = areas / scale
    weights = 1.0 / np.sqrt(np.maximum(areas, 1.0))
    weights = weights / weights.mean()

    tail = data[-max(1, data.size // 3):].mean()
    excess = data - tail
    positive = excess > 0
    tau0 = float(m[-1] - m[0]) / 4.0 or 1.0
    if positive.sum() >= 2:
        slope = np.polyfit(m[positive], np.log(excess[positive]), 1)[0]
        if slope < 0:
            tau0 = -1.0 / slope
    tau0 = float(np.clip(tau0, 1e-2, 1e3 * m[-1]))
    amplitude0 = float(excess[0] * math.exp(m[0] / tau0))

    def residuals(x: np.ndarray) -> np.ndarray:
        amplitude, plateau, tau = x
        return weights * (amplitude * np.exp(-m / tau) + plateau - data)

    result = least_squares(
        residuals, x0=[amplitude0, max(tail, 1e-6), tau0],
        bounds=([-np.inf, 0.0, 1e-3], [np.inf, np.inf, 1e4 * m[-1]]),
        method="trf", xtol=1e-8, ftol=1e-14, gtol=1e-14, max_nfev=max_nfev,
    )
    if result.status == 0:
        raise FitError(f"Envelope fit did not converge within {max_nfev} evaluations")
    if result.status < 0:
        raise FitError(f"Envelope fit failed: {result.message}")

    amplitude, plateau, tau = result.x
    amplitude *= scale
    plateau *= scale
    sigma = np.sqrt(np.maximum(areas, 1.0))
    decay = np.exp(-m / tau)
    jacobian = np.column_stack([decay, np.ones_like(m), amplitude * decay * m / tau ** 2]) / sigma[:, None]
    covariance = np.linalg.pinv(jacobian.T @ jacobian)
    chi2 = float(np.sum(((amplitude * decay + plateau - areas) / sigma) ** 2)) / max(m.size - 3, 1)

    amplitude_err = float(math.sqrt(max(covariance[0, 0], 0.0)))
    if abs(amplitude) < 2.0 * amplitude_err:
        return _flat_fit(m, areas, period)

    g0_var = covariance[0, 0] + covariance[1, 1] + 2.0 * covariance[0, 1]
    fit = EnvelopeFit(
        G0=float(amplitude + plateau),
        Ginf=float(plateau),
        T=float(tau * period),
        residual=chi2,
        G0_err=float(math.sqrt(max(g0_var, 0.0))),
        Ginf_err=float(math.sqrt(max(covariance[1, 1], 0.0))),
        T_err=float(math.sqrt(max(covariance[2, 2], 0.0)) * period),
        identifiable=True,
        m_range=(int(m[0]), int(m[-1])),
        period=period,
    )
    logger.info(f"Envelope fit: G0={fit.G0:.2f}, Ginf={fit.Ginf:.2f}, T={fit.T:.3e} s, chi2/dof={chi2:.3f}")
    return fit


def fit_envelope(hist: CoincidenceHistogram,
                 m_range: Tuple[int, int] = (1, DeviceDefaults.M_MAX)) -> EnvelopeFit:
    """Fit the blinking envelope to histogram peaks m_range[0]..m_range[1]."""
    m_min, m_max = m_range
    if m_min < 1 or m_max < m_min:
        raise ConfigurationError(f"Invalid peak range {m_range}")
    m = np.arange(m_min, m_max + 1)
    areas = np.array([hist.peak_area(int(k)) for k in m], dtype=float)
    return fit_peak_areas(m, areas, hist.period)


# ========================= NORMALISATION =========================

@dataclass(frozen=True)
class NormalizedG2:
    value: float
    error: float
    mode: str


def normalize_g2(hist: CoincidenceHistogram, fit: EnvelopeFit,
                 mode: str = NormalizationMode.PLATEAU) -> NormalizedG2:
    """
    Zero-delay peak area over Ginf (plateau) or over the m -> 0 extrapolation G0
    (nearest_neighbor).

    The zero peak holds every same-pulse pair twice, so its Poisson variance is
    twice its area.
    """
    if mode not in NormalizationMode.ALL:
        raise ConfigurationError(f"Unknown normalisation mode: {mode}")
    if mode == NormalizationMode.NEAREST_NEIGHBOR:
        hist.peak_area(1)
        constant, constant_err = fit.G0, fit.G0_err
    else:
        constant, constant_err = fit.Ginf, fit.Ginf_err
    if not constant > 0:
        raise CorrelationError(f"Normalisation constant for {mode} is {constant}")
    zero = float(hist.peak_area(0))
    value = zero / constant
    relative = (2.0 / zero if zero > 0 else 0.0) + (constant_err / constant) ** 2
    return NormalizedG2(value=value, error=value * math.sqrt(relative), mode=mode)


def write_fit_report(path: Union[str, Path], fit: EnvelopeFit,
                     normalized: Sequence[NormalizedG2], extra: Optional[Dict[str, object]] = None) -> Path:
    """Write `key=value` lines describing the fit and normalised values."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries: Dict[str, object] = dict(fit.as_dict())
    for item in normalized:
        entries[f"g2_{item.mode}"] = item.value
        entries[f"g2_{item.mode}_err"] = item.error
    entries.update(extra or {})
    with path.open("w", encoding="utf-8") as handle:
        for key, value in entries.items():
            text = f"{value:.12g}" if isinstance(value, float) else str(value)
            handle.write(f"{key}={text}\n")
    return path
