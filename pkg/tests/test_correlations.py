import math

import numpy as np
import pytest

from correlations import (
    CorrelationCurve,
    g2_spectrum,
    g2_tau_cw,
    g2_zero_cw,
    pulse_statistics,
    pulsed_g2,
    run_sweep,
    signal_transmission,
    transmission_spectrum,
)
from dynamics import PulseShape, calibrate_drive
from errors import ConfigurationError, CorrelationError
from hilbert import SystemParams
from sim_config import PS, Axis, CurveKind, Estimator


def test_curve_rejects_unsorted_abscissa(small_params):
    with pytest.raises(ConfigurationError):
        CorrelationCurve(Axis.TAU_SECONDS, CurveKind.G2, [0.0, 2.0, 1.0], [1.0, 1.0, 1.0], small_params)
    with pytest.raises(CorrelationError):
        CorrelationCurve(Axis.TAU_SECONDS, CurveKind.G2, [0.0, 1.0], [1.0, -0.5], small_params)


def test_run_sweep_keeps_grid_order():
    points = list(range(12))
    assert run_sweep(lambda x: x * x, points, workers=4) == [x * x for x in points]


def test_undriven_g2_is_undefined(small_params):
    with pytest.raises(CorrelationError):
        g2_zero_cw(small_params, 0.0)


def test_empty_cavity_is_coherent():
    params = SystemParams.from_ghz(g=0.0, kappa=16.0, gamma=0.1, n_max=6)
    driven = params.with_drive(0.3 * params.kappa)
    for detuning in (-1.0, 0.0, 0.8):
        assert g2_zero_cw(driven, detuning * params.kappa) == pytest.approx(1.0, abs=1e-6)
    curve = g2_tau_cw(driven, 0.0, np.linspace(0.0, 30 * PS, 16))
    assert curve.values == pytest.approx(np.ones(16), abs=1e-6)


def test_zero_coupling_spectrum_is_flat():
    params = SystemParams.from_ghz(g=0.0, kappa=16.0, gamma=0.1, n_max=6)
    grid = np.linspace(-2.0, 2.0, 9) * params.detuning_unit
    curve = g2_spectrum(params, grid, target_n=0.4)
    assert curve.axis == Axis.DETUNING_OVER_G
    assert curve.values == pytest.approx(np.ones(9), abs=1e-6)


def test_spectra_are_symmetric_in_detuning(device_params):
    grid = np.array([-1.5, -1.0, -0.5, 0.5, 1.0, 1.5]) * device_params.g
    fixed = device_params.with_drive(0.3 * device_params.kappa)
    intensity = transmission_spectrum(fixed, grid)
    g2 = g2_spectrum(fixed, grid)
    assert intensity.values == pytest.approx(intensity.values[::-1], rel=1e-6)
    assert g2.values == pytest.approx(g2.values[::-1], rel=1e-6)


def test_vacuum_rabi_doublet(device_params):
    grid = np.array([-1.0, 0.0, 1.0]) * device_params.g
    curve = transmission_spectrum(device_params, grid, target_n=0.4)
    assert curve.xs == pytest.approx([-1.0, 0.0, 1.0])
    assert curve.values[1] < curve.values[0]
    assert curve.values[1] < curve.values[2]
    assert curve.values[2] == pytest.approx(0.4, rel=1e-5)


def test_blockade_and_tunneling(device_params):
    """Sub-Poissonian dip near 1.5 g, bunching on the bare cavity resonance."""
    grid = np.linspace(1.0, 2.0, 21) * device_params.g
    curve = g2_spectrum(device_params, grid, target_n=0.4)
    minimum = curve.xs[int(np.argmin(curve.values))]
    assert 1.2 <= minimum <= 1.8
    assert curve.values.min() < 1.0

    drive = curve.params_snapshot
    at_resonance = g2_zero_cw(drive, 0.0)
    assert at_resonance > 1.0
    assert at_resonance > g2_zero_cw(drive, 1.5 * device_params.g)


def test_g2_tau_starts_at_g2_zero(device_params):
    drive = device_params.with_drive(calibrate_drive(device_params, 0.4, device_params.g))
    curve = g2_tau_cw(drive, 0.0, np.linspace(0.0, 50 * PS, 51))
    assert curve.values[0] == pytest.approx(g2_zero_cw(drive, 0.0), abs=1e-6)
    # the excess relaxes with the polariton coherence, e^{-(κ+γ/2)τ/2}, half the photon energy decay rate
    rate = 0.5 * (device_params.kappa + 0.5 * device_params.gamma)
    assert math.exp(-rate * 40 * PS) < 0.2 < math.exp(-rate * 20 * PS)
    excess = abs(curve.values[0] - 1.0)
    later = abs(curve.values[np.searchsorted(curve.xs, 40 * PS)] - 1.0)
    assert later < 0.2 * excess


def test_g2_tau_prepends_zero_delay(device_params):
    drive = device_params.with_drive(0.3 * device_params.kappa)
    taus = np.linspace(5 * PS, 20 * PS, 4)
    curve = g2_tau_cw(drive, device_params.g, taus)
    assert curve.xs == pytest.approx(taus)
    with pytest.raises(ConfigurationError):
        g2_tau_cw(drive, 0.0, [-1 * PS, 0.0])


@pytest.mark.slow
def test_cutoff_doubling_changes_spectrum_little(device_params):
    grid = np.array([0.0, 1.0, 1.5]) * device_params.g
    coarse = g2_spectrum(device_params, grid, target_n=0.4)
    fine = g2_spectrum(device_params.with_cutoff(12), grid, target_n=0.4)
    assert np.max(np.abs(fine.values - coarse.values) / fine.values) < 5e-3


# ===== PULSED =====

def test_pulse_statistics_basics(small_params):
    pulse = PulseShape(fwhm=40 * PS, peak_amp=0.8 * small_params.kappa)
    stats = pulse_statistics(small_params, pulse, small_params.g)
    assert stats.mean_photons > 0
    assert stats.pair_moment >= 0
    assert stats.times.size == 400
    assert stats.peak_photon_number == pytest.approx(stats.photon_number.max())
    assert stats.estimate(Estimator.INTEGRATED) == stats.g2_integrated
    with pytest.raises(ConfigurationError):
        pulse_statistics(small_params, pulse, small_params.g, points=100)
    with pytest.raises(ConfigurationError):
        pulsed_g2(small_params, pulse, 0.0, estimator="bogus")


def test_empty_cavity_pulse_is_poissonian():
    params = SystemParams.from_ghz(g=0.0, kappa=16.0, gamma=0.1, n_max=5)
    pulse = PulseShape(fwhm=40 * PS, peak_amp=0.5 * params.kappa)
    stats = pulse_statistics(params, pulse, 0.0)
    assert stats.g2_integrated == pytest.approx(1.0, abs=1e-4)
    assert stats.g2_instantaneous == pytest.approx(1.0, abs=1e-4)


def test_vanishing_pulse_raises(small_params):
    with pytest.raises(CorrelationError):
        pulse_statistics(small_params, PulseShape(fwhm=40 * PS, peak_amp=0.0), 0.0)


@pytest.mark.slow
def test_long_weak_pulse_approaches_cw(small_params):
    amplitude = calibrate_drive(small_params, 0.01, small_params.g)
    pulse = PulseShape(fwhm=1000 * PS, peak_amp=amplitude)
    for detuning in (0.0, 1.5 * small_params.g):
        cw = g2_zero_cw(small_params.with_drive(amplitude), detuning)
        pulsed = pulsed_g2(small_params, pulse, detuning, Estimator.INSTANTANEOUS)
        assert pulsed == pytest.approx(cw, rel=0.02)


# ===== TWO-TONE =====

def test_signal_needs_a_beat(small_params):
    with pytest.raises(ConfigurationError):
        signal_transmission(small_params, 0.1 * small_params.kappa, 0.01 * small_params.kappa, 0.0)


def test_weak_signal_alone_is_linear(small_params):
    """Without a gate the signal response scales with the signal power."""
    gated = small_params.at_probe_detuning(small_params.g)
    beat = (np.sqrt(2.0) - 2.0) * small_params.g
    weak = signal_transmission(gated, 0.0, 0.002 * small_params.kappa, beat, beat_periods=2)
    weaker = signal_transmission(gated, 0.0, 0.001 * small_params.kappa, beat, beat_periods=2)
    assert weak > 0
    assert weak / weaker == pytest.approx(4.0, rel=1e-2)
