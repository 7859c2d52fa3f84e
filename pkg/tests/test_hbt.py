import math

import numpy as np
import pytest

from blinking import ClickStream
from errors import ConfigurationError, FitError, HistogramError
from hbt import (
    CoincidenceHistogram,
    build_histogram,
    fit_envelope,
    fit_peak_areas,
    normalize_g2,
    write_fit_report,
)
from sim_config import NS, PS, NormalizationMode

PERIOD = 12.5 * NS


def _envelope(m, g0, ginf, tau):
    return (g0 - ginf) * np.exp(-np.asarray(m, dtype=float) / tau) + ginf


def _peak_histogram(zero_area, areas, period=PERIOD, bin_width=500 * PS):
    """Histogram with every peak's counts in the bin starting at m T0."""
    m_max = len(areas)
    max_lag = (m_max + 0.5) * period
    offset = int(round(max_lag / bin_width)) + 1
    counts = np.zeros(2 * offset, dtype=np.int64)
    per_bin = int(round(period / bin_width))
    counts[offset] = zero_area
    for m, area in enumerate(areas, start=1):
        counts[offset + m * per_bin] = area
        counts[offset - m * per_bin] = area
    return CoincidenceHistogram(bin_width, counts, period, max_lag)


# ===== HISTOGRAM =====

def _brute_force(t0, t1, lag_ps, width_ps):
    offset = lag_ps // width_ps + 1
    counts = np.zeros(2 * offset, dtype=np.int64)
    for start in t0:
        for stop in t1:
            delay = int(stop) - int(start)
            if abs(delay) <= lag_ps:
                counts[delay // width_ps + offset] += 1
                counts[-delay // width_ps + offset] += 1
    return counts


def test_histogram_matches_brute_force():
    rng = np.random.default_rng(17)
    t0 = rng.integers(0, 200_000, size=300)
    t1 = rng.integers(0, 200_000, size=250)
    stream = ClickStream(t0, t1, {"period_ps": 12_500})
    histogram = build_histogram(stream, bin_width=100 * PS, max_lag=20_000 * PS)
    expected = _brute_force(np.sort(t0), np.sort(t1), 20_000, 100)
    assert np.array_equal(histogram.counts, expected)
    assert histogram.total == int(expected.sum())
    assert histogram.total % 2 == 0
    assert histogram.period == pytest.approx(12.5 * NS)
    assert histogram.offset == 201


def test_histogram_is_worker_independent():
    rng = np.random.default_rng(3)
    stream = ClickStream(rng.integers(0, 10**7, size=120_000), rng.integers(0, 10**7, size=90_000), {})
    serial = build_histogram(stream, 100 * PS, 50 * NS, period=PERIOD)
    threaded = build_histogram(stream, 100 * PS, 50 * NS, period=PERIOD, workers=4)
    assert np.array_equal(serial.counts, threaded.counts)
    assert serial.total % 2 == 0


def test_histogram_needs_both_channels():
    with pytest.raises(HistogramError):
        build_histogram(ClickStream(np.array([1, 2]), np.array([], dtype=np.uint64)), 100 * PS, 10 * NS)
    with pytest.raises(ConfigurationError):
        build_histogram(ClickStream(np.array([1]), np.array([2])), 0.0, 10 * NS)


def test_peak_area_window_and_range():
    histogram = _peak_histogram(50, [100, 90, 80, 70])
    assert histogram.peak_area(0) == 50
    assert histogram.peak_area(2) == 90
    assert histogram.peak_area(-3) == 80
    assert list(histogram.peak_areas(4)) == [50, 100, 90, 80, 70]
    with pytest.raises(HistogramError):
        histogram.peak_area(6)


# ===== ENVELOPE FIT =====

def test_noiseless_fit_recovers_parameters():
    m = np.arange(1, 41)
    areas = _envelope(m, 3000.0, 2000.0, 16.0)
    fit = fit_peak_areas(m, areas, PERIOD)
    assert fit.identifiable
    assert fit.G0 == pytest.approx(3000.0, rel=1e-6)
    assert fit.Ginf == pytest.approx(2000.0, rel=1e-6)
    assert fit.T == pytest.approx(16.0 * PERIOD, rel=1e-6)
    assert fit.m_range == (1, 40)


def test_fit_is_scale_invariant():
    m = np.arange(1, 41)
    areas = _envelope(m, 1300.0, 1000.0, 9.0) + np.random.default_rng(4).normal(0.0, 20.0, size=40)
    base = fit_peak_areas(m, areas, PERIOD)
    scaled = fit_peak_areas(m, 4.0 * areas, PERIOD)
    assert scaled.T == pytest.approx(base.T, rel=1e-10)
    assert scaled.G0 / base.G0 == pytest.approx(4.0, rel=1e-10)
    assert scaled.Ginf / base.Ginf == pytest.approx(4.0, rel=1e-10)


def test_normalized_g2_is_scale_invariant():
    areas = np.rint(_envelope(np.arange(1, 41), 1500.0, 1000.0, 12.0)).astype(int)
    one = _peak_histogram(900, areas)
    four = _peak_histogram(3600, 4 * areas)
    for mode in NormalizationMode.ALL:
        first = normalize_g2(one, fit_envelope(one), mode)
        second = normalize_g2(four, fit_envelope(four), mode)
        assert second.value == pytest.approx(first.value, rel=1e-10)
        assert second.mode == mode


def test_poisson_noise_recovery_within_three_sigma():
    rng = np.random.default_rng(2024)
    m = np.arange(1, 41)
    truth = _envelope(m, 7500.0, 5000.0, 10.0)
    covered = 0
    for _ in range(100):
        fit = fit_peak_areas(m, rng.poisson(truth).astype(float), PERIOD)
        assert fit.identifiable
        if abs(fit.T - 10.0 * PERIOD) < 3.0 * fit.T_err and abs(fit.Ginf - 5000.0) < 3.0 * fit.Ginf_err:
            covered += 1
    assert covered >= 95


def test_flat_peaks_make_blinking_unidentifiable():
    m = np.arange(1, 21)
    fit = fit_peak_areas(m, np.full(20, 400.0), PERIOD)
    assert not fit.identifiable
    assert math.isnan(fit.T)
    assert fit.G0 == fit.Ginf == pytest.approx(400.0)
    assert fit.G0_err == pytest.approx(math.sqrt(400.0 / 20))


def test_fit_input_checks():
    with pytest.raises(ConfigurationError):
        fit_peak_areas([1, 2, 3], [5.0, 4.0, 3.0], PERIOD)
    with pytest.raises(ConfigurationError):
        fit_peak_areas([0, 1, 2, 3], [5.0, 4.0, 3.0, 2.0], PERIOD)
    with pytest.raises(FitError):
        fit_peak_areas([1, 2, 3, 4], [5.0, 0.0, 3.0, 2.0], PERIOD)


def test_fit_gives_up_when_out_of_evaluations():
    m = np.arange(1, 41)
    with pytest.raises(FitError):
        fit_peak_areas(m, _envelope(m, 3000.0, 2000.0, 16.0) * (1 + 0.01 * np.sin(m)), PERIOD, max_nfev=1)


# ===== NORMALISATION =====

def test_normalisations():
    areas = np.rint(_envelope(np.arange(1, 41), 1250.0, 1000.0, 16.0)).astype(int)
    histogram = _peak_histogram(700, areas)
    fit = fit_envelope(histogram)
    plateau = normalize_g2(histogram, fit, NormalizationMode.PLATEAU)
    nearest = normalize_g2(histogram, fit, NormalizationMode.NEAREST_NEIGHBOR)
    assert plateau.value == pytest.approx(0.7, rel=5e-3)
    assert nearest.value == pytest.approx(0.56, rel=5e-3)
    # zero peak holds each same-pulse pair twice
    assert plateau.error >= plateau.value * math.sqrt(2.0 / 700)
    with pytest.raises(ConfigurationError):
        normalize_g2(histogram, fit, "bogus")


def test_fit_report(tmp_path):
    areas = np.rint(_envelope(np.arange(1, 41), 1250.0, 1000.0, 16.0)).astype(int)
    histogram = _peak_histogram(700, areas)
    fit = fit_envelope(histogram)
    values = [normalize_g2(histogram, fit, mode) for mode in NormalizationMode.ALL]
    path = write_fit_report(tmp_path / "fit.txt", fit, values, {"seed": 5})
    entries = dict(line.split("=", 1) for line in path.read_text(encoding="utf-8").splitlines())
    assert float(entries["g2_plateau"]) == pytest.approx(values[0].value, rel=1e-10)
    assert entries["identifiable"] == "True"
    assert entries["seed"] == "5"
