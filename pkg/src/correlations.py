"""
Photon statistics of the cavity output channel: CW g²(0) and g²(τ) through the
quantum regression theorem, transmission and g² detuning sweeps, and
pulse-averaged correlations for finite-bandwidth probes.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np
import tqdm

from dynamics import (
    PulseShape,
    QuantumState,
    build_liouvillian,
    calibrate_drive,
    cavity_collapse_set,
    evolve_master,
    integrate,
    pulse_time_grid,
    pulsed_hamiltonian,
    solve_steady_state,
    two_tone_hamiltonian,
)
from errors import ConfigurationError, CorrelationError
from hilbert import SystemParams, build_space, jc_hamiltonian
from sim_config import Axis, CurveKind, Estimator, StateKind, settings

logger = logging.getLogger(__name__)

MIN_INTENSITY = 1e-12
MIN_PULSE_PHOTONS = 1e-14
PULSE_POINTS = 400


@dataclass
class CorrelationCurve:
    """Sampled g² or intensity against delay or normalised detuning."""

    axis: str
    kind: str
    xs: np.ndarray
    values: np.ndarray
    params_snapshot: SystemParams
    errors: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.axis not in Axis.ALL:
            raise ConfigurationError(f"Unknown axis: {self.axis}")
        if self.kind not in CurveKind.ALL:
            raise ConfigurationError(f"Unknown curve kind: {self.kind}")
        self.xs = np.asarray(self.xs, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.xs.shape != self.values.shape:
            raise ConfigurationError("Curve abscissa and values differ in length")
        if self.xs.size > 1 and np.any(np.diff(self.xs) <= 0):
            raise ConfigurationError("Curve abscissa must be strictly increasing")
        if np.any(self.values < 0):
            raise CorrelationError(f"Negative {self.kind} value {self.values.min():.3e}")
        if self.errors is not None:
            self.errors = np.asarray(self.errors, dtype=float)

    def __len__(self) -> int:
        return self.xs.size

    def to_rows(self) -> List[Tuple[float, float, float]]:
        errors = self.errors if self.errors is not None else np.full(self.xs.size, np.nan)
        return [(float(x), float(v), float(e)) for x, v, e in zip(self.xs, self.values, errors)]


# ========================= CW STATISTICS =========================

def _steady_moments(params: SystemParams) -> Tuple[QuantumState, float, float]:
    space = build_space(params.n_max)
    rho = solve_steady_state(params)
    a, ad = space.destroy, space.create
    intensity = float(rho.expect(space.number).real)
    pairs = float(rho.expect(ad @ ad @ a @ a).real)
    return rho, intensity, pairs


def g2_zero_cw(params: SystemParams, detuning: float) -> float:
    """
    Zero-delay correlation of the steady state at probe detuning wp - w0.

    Raises:
        CorrelationError: when ⟨a†a⟩ is below 1e-12
    """
    _, intensity, pairs = _steady_moments(params.at_probe_detuning(detuning))
    if intensity < MIN_INTENSITY:
        raise CorrelationError(f"Mean photon number {intensity:.3e} too small for a g2 ratio")
    return pairs / intensity ** 2


def g2_tau_cw(params: SystemParams, detuning: float, tau_grid: Sequence[float]) -> CorrelationCurve:
    """
    g²(τ) from the quantum regression theorem.

    The conditional state a ρ_ss a† / ⟨n⟩ is propagated under the same Liouvillian
    and g²(τ) = ⟨a†a⟩_cond(τ) / ⟨a†a⟩_ss.
    """
    taus = np.asarray(tau_grid, dtype=float)
    if taus.size == 0 or taus[0] < 0:
        raise ConfigurationError("Delays must be non-negative")
    detuned = params.at_probe_detuning(detuning)
    space = build_space(detuned.n_max)
    rho, intensity, _ = _steady_moments(detuned)
    if intensity < MIN_INTENSITY:
        raise CorrelationError(f"Mean photon number {intensity:.3e} too small for a g2 ratio")

    a = space.destroy.entries
    conditional = QuantumState(StateKind.DENSITY, a @ rho.data @ a.conj().T / intensity)
    prepend = taus[0] > 0
    grid = np.concatenate([[0.0], taus]) if prepend else taus
    states = evolve_master(conditional, jc_hamiltonian(detuned, space),
                           cavity_collapse_set(detuned, space), grid)
    if prepend:
        states = states[1:]
    number = space.number.entries
    values = np.array([np.trace(number @ state.data).real for state in states]) / intensity
    return CorrelationCurve(Axis.TAU_SECONDS, CurveKind.G2, taus, np.clip(values, 0.0, None), detuned)


# ========================= DETUNING SWEEPS =========================

def run_sweep(evaluate: Callable[[Any], Any], points: Sequence[Any], workers: int = 1,
              label: str = "sweep") -> List[Any]:
    """Evaluate independent grid points and return the results in grid order."""
    progress = tqdm.tqdm(total=len(points), desc=label, leave=None, disable=not settings.show_progress)
    values: List[Any] = []
    with progress:
        if workers > 1 and len(points) > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                for value in executor.map(evaluate, points):
                    values.append(value)
                    progress.update(1)
        else:
            for point in points:
                values.append(evaluate(point))
                progress.update(1)
    return values


def _sweep_params(params: SystemParams, target_n: Optional[float],
                  calibration_detuning: Optional[float]) -> SystemParams:
    """Hold the drive fixed across a sweep, calibrated once (default: upper polariton)."""
    if target_n is None:
        return params
    if calibration_detuning is None:
        calibration_detuning = params.g
    return params.with_drive(calibrate_drive(params, target_n, calibration_detuning))


def _detuning_grid(detuning_grid: Sequence[float]) -> np.ndarray:
    grid = np.asarray(detuning_grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ConfigurationError("Detuning grid is empty")
    return grid


def transmission_spectrum(params: SystemParams, detuning_grid: Sequence[float],
                          target_n: Optional[float] = None, workers: int = 1,
                          calibration_detuning: Optional[float] = None) -> CorrelationCurve:
    """Steady-state ⟨a†a⟩ across probe detunings, x axis in units of g."""
    grid = _detuning_grid(detuning_grid)
    fixed = _sweep_params(params, target_n, calibration_detuning)
    space = build_space(fixed.n_max)

    def evaluate(detuning: float) -> float:
        return float(solve_steady_state(fixed.at_probe_detuning(detuning)).expect(space.number).real)

    values = np.array(run_sweep(evaluate, grid, workers, "spectrum"), dtype=float)
    return CorrelationCurve(Axis.DETUNING_OVER_G, CurveKind.INTENSITY,
                            grid / fixed.detuning_unit, np.clip(values, 0.0, None), fixed)


def g2_spectrum(params: SystemParams, detuning_grid: Sequence[float],
                target_n: Optional[float] = None, workers: int = 1,
                calibration_detuning: Optional[float] = None) -> CorrelationCurve:
    """g²(0) across probe detunings."""
    grid = _detuning_grid(detuning_grid)
    fixed = _sweep_params(params, target_n, calibration_detuning)
    values = np.array(run_sweep(lambda detuning: g2_zero_cw(fixed, detuning), grid, workers, "g2"), dtype=float)
    return CorrelationCurve(Axis.DETUNING_OVER_G, CurveKind.G2, grid / fixed.detuning_unit, values, fixed)


# ========================= PULSED STATISTICS =========================

@dataclass
class PulseStatistics:
    """
    Photon statistics of one probe pulse in the output channel.

    mean_photons is μ = 2κ∫⟨n⟩dt, pair_moment is ν = (2κ)²∫∫G²(t,t')dt dt'
    (the expected number of ordered emitted pairs).
    """

    mean_photons: float
    pair_moment: float
    equal_time_pairs: float
    squared_intensity: float
    times: np.ndarray
    photon_number: np.ndarray

    @property
    def g2_integrated(self) -> float:
        return self.pair_moment / self.mean_photons ** 2

    @property
    def g2_instantaneous(self) -> float:
        return self.equal_time_pairs / self.squared_intensity

    @property
    def peak_photon_number(self) -> float:
        return float(np.max(self.photon_number))

    def estimate(self, estimator: str) -> float:
        if estimator == Estimator.INTEGRATED:
            return self.g2_integrated
        if estimator == Estimator.INSTANTANEOUS:
            return self.g2_instantaneous
        raise ConfigurationError(f"Unknown estimator: {estimator}")


def pulse_statistics(params: SystemParams, pulse: PulseShape, detuning: float,
                     points: int = PULSE_POINTS, atol: float = 1e-12) -> PulseStatistics:
    """
    Integrate one pulse together with the two-time regression in a single pass.

    Alongside ρ(t) the integrator carries X(t') = ∫_{t<t'} e^{L(t'-t)}[2κ a ρ(t) a†] dt,
    so ∫_{t<t'} G² follows from ∫ Tr(a†a X). Accumulated integrals are scaled by 2κ
    to keep them of order one.
    """
    if points < PULSE_POINTS:
        raise ConfigurationError(f"Pulse statistics need at least {PULSE_POINTS} samples, got {points}")
    detuned = params.at_probe_detuning(detuning)
    space = build_space(detuned.n_max)
    dim = space.dim
    size = dim * dim
    rate = 2.0 * detuned.kappa

    generator = build_liouvillian(pulsed_hamiltonian(detuned, pulse, space), cavity_collapse_set(detuned, space))
    a = space.destroy.entries
    ad = space.create.entries
    feed = rate * np.kron(a, a.conj())
    number_row = space.number.entries.T.reshape(-1)
    pairs_row = (ad @ ad @ a @ a).T.reshape(-1)

    def rhs(t, y):
        superop = generator.at(t)
        rho, cross = y[:size], y[size:2 * size]
        intensity = number_row @ rho
        derivative = np.empty_like(y)
        derivative[:size] = superop @ rho
        derivative[size:2 * size] = superop @ cross + feed @ rho
        derivative[2 * size] = rate * (number_row @ cross)
        derivative[2 * size + 1] = rate * intensity
        derivative[2 * size + 2] = rate * (pairs_row @ rho)
        derivative[2 * size + 3] = rate * intensity * intensity
        return derivative

    y0 = np.zeros(2 * size + 4, dtype=complex)
    y0[space.index(0, 0) * (dim + 1)] = 1.0
    grid = pulse_time_grid(pulse, detuned.kappa, points)
    samples = integrate(rhs, y0, grid, atol=atol, max_step=pulse.fwhm / 8.0)

    final = samples[-1].real
    ordered_pairs, mean_photons, equal_time, squared = final[2 * size:2 * size + 4]
    if mean_photons < MIN_PULSE_PHOTONS:
        raise CorrelationError(f"Pulse delivers only {mean_photons:.3e} photons; g2 undefined")
    photon_number = np.clip((samples[:, :size] @ number_row).real, 0.0, None)
    stats = PulseStatistics(
        mean_photons=float(mean_photons),
        pair_moment=float(2.0 * ordered_pairs),
        equal_time_pairs=float(equal_time),
        squared_intensity=float(squared),
        times=grid,
        photon_number=photon_number,
    )
    logger.debug(f"Pulse at detuning {detuning:.4e}: mu={stats.mean_photons:.4e}, "
                 f"g2_int={stats.g2_integrated:.4f}, g2_inst={stats.g2_instantaneous:.4f}")
    return stats


def pulsed_g2(params: SystemParams, pulse: PulseShape, detuning: float,
              estimator: str = Estimator.INTEGRATED) -> float:
    """
    Pulse-averaged zero-delay correlation.

    Args:
        estimator: "integrated" gives ∫∫G² / (∫⟨n⟩)², the area of the zero-delay
            coincidence peak; "instantaneous" gives ∫G²(t,t) / ∫⟨n⟩², which tends
            to the CW value for long weak pulses
    """
    if estimator not in Estimator.ALL:
        raise ConfigurationError(f"Unknown estimator: {estimator}")
    return pulse_statistics(params, pulse, detuning).estimate(estimator)


# ========================= TWO-TONE RESPONSE =========================

def signal_transmission(params: SystemParams, gate_amp: float, signal_amp: float, beat: float,
                        settle_lifetimes: float = 20.0, beat_periods: int = 4,
                        samples_per_period: int = 64) -> float:
    """
    Intracavity photon number at the signal frequency wp + beat.

    The system starts in the gate-only steady state, settles for settle_lifetimes
    cavity lifetimes under both tones, and the signal component of ⟨a(t)⟩ is
    averaged over beat_periods full beat periods.
    """
    if beat == 0:
        raise ConfigurationError("Signal must be offset from the gate frequency")
    space = build_space(params.n_max)
    start = solve_steady_state(params.with_drive(gate_amp))
    period = 2.0 * np.pi / abs(beat)
    settle = settle_lifetimes / (2.0 * params.kappa)
    settle = np.ceil(settle / period) * period
    window = np.linspace(settle, settle + beat_periods * period, beat_periods * samples_per_period + 1)
    grid = np.concatenate([[0.0], window])
    states = evolve_master(start, two_tone_hamiltonian(params, gate_amp, signal_amp, beat, space),
                           cavity_collapse_set(params, space), grid, max_step=period / 16.0)
    a = space.destroy.entries
    field = np.array([np.trace(a @ state.data) for state in states[1:]])
    component = np.mean(field[:-1] * np.exp(1j * beat * window[:-1]))
    return float(abs(component) ** 2)
