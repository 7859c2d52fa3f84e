"""
Open-system dynamics of the driven cavity: Lindblad master equation (steady state
and time-dependent pulses), quantum-jump trajectories and drive calibration.

Superoperators act on row-major vectorised density matrices:
vec(A X B) = (A ⊗ Bᵀ) vec(X).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm, solve, svdvals
from scipy.optimize import brentq

from errors import (
    CalibrationError,
    ConfigurationError,
    DimensionError,
    IntegrationError,
    SteadyStateError,
    TrajectoryError,
)
from hilbert import QuantumOperator, SystemParams, TruncatedSpace, build_space, jc_hamiltonian
from sim_config import StateKind

logger = logging.getLogger(__name__)

Envelope = Callable[[float], float]

STATE_TOLERANCE = 1e-9
RESIDUAL_TOLERANCE = 1e-10
DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10


def _matrix(operator: Union[QuantumOperator, np.ndarray]) -> np.ndarray:
    return operator.entries if isinstance(operator, QuantumOperator) else np.asarray(operator, dtype=complex)


# ========================= STATES =========================

@dataclass(frozen=True, eq=False)
class QuantumState:
    """A ket or a density matrix."""

    kind: str
    data: np.ndarray

    @classmethod
    def ket(cls, vector: np.ndarray, normalize: bool = False) -> "QuantumState":
        vector = np.array(vector, dtype=complex).reshape(-1)
        if normalize:
            norm = np.linalg.norm(vector)
            if norm == 0:
                raise ConfigurationError("Cannot normalise the zero vector")
            vector = vector / norm
        return cls(StateKind.KET, vector).validate()

    @classmethod
    def density(cls, matrix: np.ndarray) -> "QuantumState":
        return cls(StateKind.DENSITY, np.array(matrix, dtype=complex)).validate()

    @classmethod
    def basis(cls, space: TruncatedSpace, emitter: int, n: int) -> "QuantumState":
        return cls.ket(space.basis_ket(emitter, n))

    @classmethod
    def vacuum(cls, space: TruncatedSpace) -> "QuantumState":
        return cls.basis(space, 0, 0)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def is_ket(self) -> bool:
        return self.kind == StateKind.KET

    def validate(self, tol: float = STATE_TOLERANCE) -> "QuantumState":
        """Check normalisation (and Hermiticity, positivity for density matrices)."""
        if self.kind not in StateKind.ALL:
            raise ConfigurationError(f"Unknown state kind: {self.kind}")
        if self.is_ket:
            if self.data.ndim != 1:
                raise DimensionError(f"Ket must be a vector, got shape {self.data.shape}")
            norm = float(np.vdot(self.data, self.data).real)
            if abs(norm - 1.0) > tol:
                raise ConfigurationError(f"Ket norm {norm:.12f} differs from 1")
            return self
        if self.data.ndim != 2 or self.data.shape[0] != self.data.shape[1]:
            raise DimensionError(f"Density matrix must be square, got shape {self.data.shape}")
        if np.max(np.abs(self.data - self.data.conj().T)) > tol:
            raise ConfigurationError("Density matrix is not Hermitian")
        trace = float(np.trace(self.data).real)
        if abs(trace - 1.0) > tol:
            raise ConfigurationError(f"Density matrix trace {trace:.12f} differs from 1")
        smallest = float(np.min(np.linalg.eigvalsh(self.data)))
        if smallest < -tol:
            raise ConfigurationError(f"Density matrix has negative eigenvalue {smallest:.3e}")
        return self

    def to_density(self) -> "QuantumState":
        if not self.is_ket:
            return self
        return QuantumState(StateKind.DENSITY, np.outer(self.data, self.data.conj()))

    def expect(self, operator: Union[QuantumOperator, np.ndarray]) -> complex:
        matrix = _matrix(operator)
        if matrix.shape[0] != self.dim:
            raise DimensionError(f"Operator dimension {matrix.shape[0]} vs state dimension {self.dim}")
        if self.is_ket:
            return complex(np.vdot(self.data, matrix @ self.data))
        return complex(np.trace(matrix @ self.data))

    def purity(self) -> float:
        if self.is_ket:
            return 1.0
        return float(np.real(np.trace(self.data @ self.data)))


@dataclass
class CollapseSet:
    """Collapse operators with rates folded in; one of them is the output channel."""

    operators: List[QuantumOperator]
    labels: List[str]
    output_index: int = 0

    def __post_init__(self):
        if len(self.operators) != len(self.labels):
            raise ConfigurationError("Each collapse operator needs a label")
        if self.operators and not 0 <= self.output_index < len(self.operators):
            raise ConfigurationError(f"Output channel index {self.output_index} out of range")
        dims = {op.dim for op in self.operators}
        if len(dims) > 1:
            raise DimensionError(f"Collapse operators of mixed dimension: {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.operators)

    def __iter__(self):
        return iter(self.operators)

    @property
    def output(self) -> QuantumOperator:
        return self.operators[self.output_index]

    @classmethod
    def empty(cls) -> "CollapseSet":
        return cls([], [])


def cavity_collapse_set(params: SystemParams, space: Optional[TruncatedSpace] = None) -> CollapseSet:
    """√(2κ) a on the output channel, plus √γ σ when the emitter radiates to free space."""
    space = space or build_space(params.n_max)
    operators = [math.sqrt(2.0 * params.kappa) * space.destroy]
    labels = ["cavity"]
    if params.gamma > 0:
        operators.append(math.sqrt(params.gamma) * space.sigma)
        labels.append("free_space")
    return CollapseSet(operators, labels, output_index=0)


# ========================= DRIVE =========================

@dataclass(frozen=True)
class PulseShape:
    """
    Gaussian probe pulse.

    fwhm is the intensity full width at half maximum; the field envelope is
    peak_amp * exp(-2 ln2 (t - center)² / fwhm²).
    """

    fwhm: float
    center: float = 0.0
    peak_amp: float = 0.0

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ConfigurationError(f"Pulse FWHM must be positive, got {self.fwhm}")
        if self.peak_amp < 0:
            raise ConfigurationError(f"Pulse amplitude must be non-negative, got {self.peak_amp}")

    def envelope(self, t):
        return self.peak_amp * np.exp(-2.0 * math.log(2.0) * (np.asarray(t) - self.center) ** 2 / self.fwhm ** 2)

    @property
    def bandwidth_fwhm_hz(self) -> float:
        """Transform-limited spectral FWHM of the intensity."""
        return 2.0 * math.log(2.0) / (math.pi * self.fwhm)

    def window(self, kappa: float) -> Tuple[float, float]:
        """Integration window covering the pulse and ten cavity lifetimes of tail."""
        return self.center - 2.0 * self.fwhm, self.center + 2.0 * self.fwhm + 10.0 / (2.0 * kappa)

    def with_peak(self, peak_amp: float) -> "PulseShape":
        return PulseShape(self.fwhm, self.center, float(peak_amp))

    def centered_at(self, center: float) -> "PulseShape":
        return PulseShape(self.fwhm, float(center), self.peak_amp)


@dataclass
class TimeDependentHamiltonian:
    """H(t) = static + Σ_k f_k(t) H_k with real envelopes f_k and Hermitian H_k."""

    static: QuantumOperator
    terms: List[Tuple[QuantumOperator, Envelope]] = field(default_factory=list)

    def __post_init__(self):
        for operator, _ in self.terms:
            if operator.dim != self.static.dim:
                raise DimensionError(f"Drive term dimension {operator.dim} vs {self.static.dim}")

    @classmethod
    def constant(cls, hamiltonian: QuantumOperator) -> "TimeDependentHamiltonian":
        return cls(hamiltonian, [])

    @property
    def dim(self) -> int:
        return self.static.dim

    def at(self, t: float) -> np.ndarray:
        matrix = np.array(self.static.entries)
        for operator, envelope in self.terms:
            matrix = matrix + float(envelope(t)) * operator.entries
        return matrix


HamiltonianLike = Union[QuantumOperator, TimeDependentHamiltonian]


def _as_time_dependent(hamiltonian: HamiltonianLike) -> TimeDependentHamiltonian:
    if isinstance(hamiltonian, TimeDependentHamiltonian):
        return hamiltonian
    return TimeDependentHamiltonian.constant(hamiltonian)


def pulsed_hamiltonian(params: SystemParams, pulse: PulseShape,
                       space: Optional[TruncatedSpace] = None) -> TimeDependentHamiltonian:
    """Undriven JC Hamiltonian plus the pulse envelope times (a + a†)."""
    space = space or build_space(params.n_max)
    static = jc_hamiltonian(params.with_drive(0.0), space)
    return TimeDependentHamiltonian(static, [(space.quadrature, pulse.envelope)])


def two_tone_hamiltonian(params: SystemParams, gate_amp: float, signal_amp: float,
                         beat: float, space: Optional[TruncatedSpace] = None) -> TimeDependentHamiltonian:
    """
    A gate tone at the probe frequency plus a weak signal tone offset by `beat`.

    In the probe frame the signal adds E_s [cos(beat t)(a + a†) + sin(beat t) i(a - a†)].
    """
    space = space or build_space(params.n_max)
    static = jc_hamiltonian(params.with_drive(gate_amp), space)
    in_phase = space.quadrature
    out_of_phase = 1j * (space.destroy - space.create)
    return TimeDependentHamiltonian(static, [
        (in_phase, lambda t: signal_amp * math.cos(beat * t)),
        (out_of_phase, lambda t: signal_amp * math.sin(beat * t)),
    ])


# ========================= LIOUVILLIAN =========================

def _commutator_superop(hamiltonian: np.ndarray) -> np.ndarray:
    identity = np.eye(hamiltonian.shape[0])
    return -1j * (np.kron(hamiltonian, identity) - np.kron(identity, hamiltonian.T))


def _dissipator_superop(c_ops: CollapseSet, dim: int) -> np.ndarray:
    identity = np.eye(dim)
    total = np.zeros((dim * dim, dim * dim), dtype=complex)
    for operator in c_ops:
        c = operator.entries
        cdc = c.conj().T @ c
        total += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, identity) - 0.5 * np.kron(identity, cdc.T)
    return total


def _check_dims(dim: int, c_ops: CollapseSet) -> None:
    for operator in c_ops:
        if operator.dim != dim:
            raise DimensionError(f"Collapse operator dimension {operator.dim} vs Hamiltonian {dim}")


def liouvillian(hamiltonian: Union[QuantumOperator, np.ndarray], c_ops: CollapseSet) -> np.ndarray:
    """Lindblad superoperator acting on row-major vec(ρ)."""
    matrix = _matrix(hamiltonian)
    _check_dims(matrix.shape[0], c_ops)
    return _commutator_superop(matrix) + _dissipator_superop(c_ops, matrix.shape[0])


@dataclass
class TimeDependentLiouvillian:
    """L(t) = static + Σ_k f_k(t) L_k."""

    static: np.ndarray
    terms: List[Tuple[np.ndarray, Envelope]]

    def at(self, t: float) -> np.ndarray:
        total = self.static
        for superop, envelope in self.terms:
            total = total + float(envelope(t)) * superop
        return total

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.static)))


def build_liouvillian(hamiltonian: HamiltonianLike, c_ops: CollapseSet) -> TimeDependentLiouvillian:
    h_of_t = _as_time_dependent(hamiltonian)
    static = liouvillian(h_of_t.static, c_ops)
    terms = [(_commutator_superop(op.entries), envelope) for op, envelope in h_of_t.terms]
    return TimeDependentLiouvillian(static, terms)


def lindblad_rhs(hamiltonian: Union[QuantumOperator, np.ndarray], c_ops: CollapseSet,
                 rho: QuantumState) -> np.ndarray:
    """dρ/dt = -i[H, ρ] + Σ_k (C_k ρ C_k† - ½{C_k†C_k, ρ})."""
    h = _matrix(hamiltonian)
    r = rho.to_density().data
    if h.shape != r.shape:
        raise DimensionError(f"Hamiltonian shape {h.shape} vs state shape {r.shape}")
    _check_dims(h.shape[0], c_ops)
    derivative = -1j * (h @ r - r @ h)
    for operator in c_ops:
        c = operator.entries
        cdc = c.conj().T @ c
        derivative += c @ r @ c.conj().T - 0.5 * (cdc @ r + r @ cdc)
    return derivative


def lindblad_residual(superop: np.ndarray, rho: QuantumState) -> float:
    """‖L(ρ)‖_max relative to ‖L‖_max."""
    scale = float(np.max(np.abs(superop)))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(superop @ rho.data.reshape(-1)))) / scale


def steady_state(hamiltonian: Union[QuantumOperator, np.ndarray], c_ops: CollapseSet) -> QuantumState:
    """
    Unique stationary state of the Lindblad equation.

    Raises:
        SteadyStateError: no collapse operators, a degenerate kernel, a solution
            that is not a density matrix, or an unacceptable residual
    """
    if len(c_ops) == 0:
        raise SteadyStateError("Steady state needs at least one collapse operator")
    superop = liouvillian(hamiltonian, c_ops)
    dim = _matrix(hamiltonian).shape[0]

    singular = svdvals(superop)
    if singular[-2] <= 1e-10 * singular[0]:
        raise SteadyStateError(
            f"Liouvillian kernel is degenerate (second smallest singular value "
            f"{singular[-2]:.3e} vs largest {singular[0]:.3e}); steady state is not unique"
        )

    system = np.array(superop)
    system[0, :] = 0.0
    system[0, np.arange(dim) * (dim + 1)] = 1.0
    rhs = np.zeros(dim * dim, dtype=complex)
    rhs[0] = 1.0
    rho = solve(system, rhs).reshape(dim, dim)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real

    try:
        state = QuantumState(StateKind.DENSITY, rho).validate()
    except ConfigurationError as error:
        raise SteadyStateError(f"Steady state is not a physical density matrix: {error}") from error
    residual = lindblad_residual(superop, state)
    if residual > RESIDUAL_TOLERANCE:
        raise SteadyStateError(f"Steady-state residual {residual:.3e} exceeds {RESIDUAL_TOLERANCE:.0e}")
    logger.debug(f"Steady state solved: dim={dim}, residual={residual:.2e}")
    return state


def solve_steady_state(params: SystemParams) -> QuantumState:
    """Steady state of the CW-driven system described by params."""
    space = build_space(params.n_max)
    return steady_state(jc_hamiltonian(params, space), cavity_collapse_set(params, space))


def mean_photon_number(params: SystemParams) -> float:
    space = build_space(params.n_max)
    return float(solve_steady_state(params).expect(space.number).real)


# ========================= TIME EVOLUTION =========================

def _check_grid(t_grid: np.ndarray) -> np.ndarray:
    t_grid = np.asarray(t_grid, dtype=float).reshape(-1)
    if t_grid.size == 0:
        raise ConfigurationError("Time grid is empty")
    if t_grid.size > 1 and np.any(np.diff(t_grid) <= 0):
        raise ConfigurationError("Time grid must be strictly increasing")
    return t_grid


def integrate(rhs: Callable[[float, np.ndarray], np.ndarray], y0: np.ndarray, t_grid: np.ndarray,
              rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
              max_step: float = np.inf) -> np.ndarray:
    """
    Adaptive DOP853 integration of a complex linear system, sampled on t_grid.

    Returns:
        Array of shape (len(t_grid), len(y0))
    """
    t_grid = _check_grid(t_grid)
    y0 = np.asarray(y0, dtype=complex)
    if t_grid.size == 1:
        return y0[np.newaxis, :].copy()
    result = solve_ivp(
        rhs, (t_grid[0], t_grid[-1]), y0, method="DOP853", t_eval=t_grid,
        rtol=rtol, atol=atol, max_step=max_step,
    )
    if not result.success or result.y.shape[1] != t_grid.size:
        failed_at = float(result.t[-1]) if result.t.size else float(t_grid[0])
        raise IntegrationError(f"Master-equation integration failed: {result.message}", time=failed_at)
    return result.y.T


def evolve_master(rho0: QuantumState, hamiltonian: HamiltonianLike, c_ops: CollapseSet,
                  t_grid: Sequence[float], rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                  max_step: float = np.inf) -> List[QuantumState]:
    """
    Integrate the master equation and return ρ at every grid time.

    Args:
        rho0: Initial ket or density matrix
        hamiltonian: Constant operator or TimeDependentHamiltonian
        c_ops: Collapse operators
        t_grid: Strictly increasing output times (seconds)
        max_step: Upper bound on the adaptive step, useful for short pulses

    Raises:
        IntegrationError: with the time at which the integrator gave up
    """
    generator = build_liouvillian(hamiltonian, c_ops)
    rho = rho0.to_density().data
    dim = rho.shape[0]
    if generator.static.shape[0] != dim * dim:
        raise DimensionError(f"State dimension {dim} does not match the Hamiltonian")

    if generator.terms:
        def rhs(t, y):
            return generator.at(t) @ y
    else:
        static = generator.static

        def rhs(t, y):
            return static @ y

    samples = integrate(rhs, rho.reshape(-1), np.asarray(t_grid, dtype=float), rtol, atol, max_step)
    return [QuantumState(StateKind.DENSITY, row.reshape(dim, dim)) for row in samples]


# ========================= QUANTUM TRAJECTORIES =========================

@dataclass
class JumpRecord:
    """Jump times and channels of one trajectory, with its final state."""

    events: List[Tuple[float, int]]
    final_state: QuantumState
    expectations: Optional[np.ndarray] = None

    def times(self, channel: Optional[int] = None) -> np.ndarray:
        return np.array([t for t, k in self.events if channel is None or k == channel], dtype=float)

    def count(self, channel: Optional[int] = None) -> int:
        return sum(1 for _, k in self.events if channel is None or k == channel)


@dataclass
class EnsembleResult:
    """Seed-ordered reduction of a trajectory ensemble."""

    t_eval: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    output_times: List[np.ndarray]
    n_trajectories: int

    @property
    def output_counts(self) -> np.ndarray:
        return np.array([times.size for times in self.output_times], dtype=int)


class TrajectorySolver:
    """
    Quantum-jump unraveling on a fixed step grid.

    Step propagators exp(-i H_eff dt) are computed once per step (drive sampled at
    the step midpoint) and shared by every trajectory the solver runs.
    """

    def __init__(self, hamiltonian: HamiltonianLike, c_ops: CollapseSet,
                 t_window: Tuple[float, float], t_eval: Optional[Sequence[float]] = None,
                 e_ops: Optional[Sequence[QuantumOperator]] = None,
                 max_step: Optional[float] = None):
        self.hamiltonian = _as_time_dependent(hamiltonian)
        self.c_ops = c_ops
        _check_dims(self.hamiltonian.dim, c_ops)
        t0, t1 = float(t_window[0]), float(t_window[1])
        if not t1 > t0:
            raise ConfigurationError(f"Trajectory window must have t1 > t0, got ({t0}, {t1})")
        self.t_window = (t0, t1)
        self.t_eval = _check_grid(t_eval) if t_eval is not None else np.array([t1])
        if self.t_eval[0] < t0 or self.t_eval[-1] > t1:
            raise ConfigurationError("Output times must lie inside the trajectory window")
        self.e_ops = [_matrix(op) for op in (e_ops or [])]

        self._decay = sum((op.entries.conj().T @ op.entries for op in c_ops),
                          np.zeros((self.hamiltonian.dim,) * 2, dtype=complex))
        self._c_matrices = [op.entries for op in c_ops]
        self.max_step = max_step or self._default_step()
        self._build_steps()

    def _default_step(self) -> float:
        bound = np.abs(self.hamiltonian.static.entries).sum(axis=1).max()
        for operator, envelope in self.hamiltonian.terms:
            samples = np.linspace(*self.t_window, 257)
            peak = float(np.max(np.abs([envelope(t) for t in samples])))
            bound += peak * np.abs(operator.entries).sum(axis=1).max()
        bound += 0.5 * np.abs(self._decay).sum(axis=1).max()
        return 0.05 / bound if bound > 0 else (self.t_window[1] - self.t_window[0]) / 100.0

    def _effective(self, t: float) -> np.ndarray:
        return self.hamiltonian.at(t) - 0.5j * self._decay

    def _build_steps(self) -> None:
        """Split [t0, t1] at the output times into equal sub-steps."""
        edges = np.unique(np.concatenate([[self.t_window[0]], self.t_eval, [self.t_window[1]]]))
        starts, widths, sample_after = [], [], []
        eval_set = set(self.t_eval.tolist())
        for left, right in zip(edges[:-1], edges[1:]):
            count = max(1, int(math.ceil((right - left) / self.max_step)))
            width = (right - left) / count
            for i in range(count):
                starts.append(left + i * width)
                widths.append(width)
                sample_after.append(i == count - 1 and right in eval_set)
        self._starts = np.array(starts)
        self._widths = np.array(widths)
        self._sample_after = np.array(sample_after)
        self._sample_at_start = self.t_window[0] in eval_set
        self._propagators = [
            expm(-1j * self._effective(start + 0.5 * width) * width)
            for start, width in zip(self._starts, self._widths)
        ]
        logger.debug(f"Trajectory grid: {len(self._starts)} steps of <= {self.max_step:.3e} s")

    def _sample(self, psi: np.ndarray) -> np.ndarray:
        norms = np.einsum("bi,bi->b", psi.conj(), psi).real
        values = [np.einsum("bi,ij,bj->b", psi.conj(), op, psi).real / norms for op in self.e_ops]
        return np.stack(values, axis=1) if values else np.zeros((psi.shape[0], 0))

    @staticmethod
    def _draw_threshold(rng: np.random.Generator) -> float:
        r = rng.random()
        while r == 0.0:
            r = rng.random()
        return r

    def _resolve_step(self, psi: np.ndarray, start: float, width: float,
                      threshold: float, rng: np.random.Generator,
                      events: List[Tuple[float, int]]) -> Tuple[np.ndarray, float]:
        """Evolve one trajectory through a step in which its norm crosses the threshold."""
        h_eff = self._effective(start + 0.5 * width)
        elapsed = 0.0
        remaining = width
        while True:
            def excess(s: float) -> float:
                trial = expm(-1j * h_eff * s) @ psi
                return float(np.vdot(trial, trial).real) - threshold

            end_state = expm(-1j * h_eff * remaining) @ psi
            if float(np.vdot(end_state, end_state).real) > threshold:
                return end_state, threshold
            if excess(0.0) <= 0.0:
                crossing = 0.0
            else:
                crossing = brentq(excess, 0.0, remaining, xtol=1e-3 * width)
            psi = expm(-1j * h_eff * crossing) @ psi
            weights = np.array([float(np.vdot(c @ psi, c @ psi).real) for c in self._c_matrices])
            total = weights.sum()
            if not total > 0 or not np.isfinite(total):
                raise TrajectoryError(
                    f"Norm fell below the jump threshold at t={start + elapsed + crossing:.6e} s "
                    "with no open decay channel"
                )
            channel = int(rng.choice(len(weights), p=weights / total))
            jumped = self._c_matrices[channel] @ psi
            psi = jumped / np.linalg.norm(jumped)
            elapsed += crossing
            remaining -= crossing
            events.append((start + elapsed, channel))
            threshold = self._draw_threshold(rng)
            if remaining <= 0.0:
                return psi, threshold

    def run_batch(self, psi0: QuantumState, rngs: Sequence[np.random.Generator]) -> List[JumpRecord]:
        """Evolve len(rngs) trajectories from psi0 in lock-step."""
        if not psi0.is_ket:
            raise ConfigurationError("Trajectories start from a ket")
        if psi0.dim != self.hamiltonian.dim:
            raise DimensionError(f"State dimension {psi0.dim} vs Hamiltonian {self.hamiltonian.dim}")
        batch = len(rngs)
        psi = np.tile(psi0.data, (batch, 1))
        thresholds = np.array([self._draw_threshold(rng) for rng in rngs])
        events: List[List[Tuple[float, int]]] = [[] for _ in range(batch)]
        samples = []
        if self._sample_at_start:
            samples.append(self._sample(psi))

        for step, (start, width) in enumerate(zip(self._starts, self._widths)):
            candidate = psi @ self._propagators[step].T
            norms = np.einsum("bi,bi->b", candidate.conj(), candidate).real
            for j in np.flatnonzero(norms <= thresholds):
                candidate[j], thresholds[j] = self._resolve_step(
                    psi[j], start, width, thresholds[j], rngs[j], events[j]
                )
            psi = candidate
            if self._sample_after[step]:
                samples.append(self._sample(psi))

        expectations = np.stack(samples, axis=1) if samples else None
        records = []
        for j in range(batch):
            final = psi[j] / np.linalg.norm(psi[j])
            per_traj = expectations[j] if expectations is not None else None
            records.append(JumpRecord(events[j], QuantumState(StateKind.KET, final), per_traj))
        return records


def mc_trajectory(psi0: QuantumState, hamiltonian: HamiltonianLike, c_ops: CollapseSet,
                  t_window: Tuple[float, float], seed: int,
                  t_eval: Optional[Sequence[float]] = None,
                  e_ops: Optional[Sequence[QuantumOperator]] = None) -> JumpRecord:
    """Single quantum-jump trajectory; identical seeds give identical records."""
    solver = TrajectorySolver(hamiltonian, c_ops, t_window, t_eval, e_ops)
    return solver.run_batch(psi0, [np.random.default_rng(seed)])[0]


def trajectory_rngs(seed: int, count: int) -> List[np.random.Generator]:
    """Independent per-trajectory generators spawned from one seed, in seed order."""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(count)]


def mc_ensemble(psi0: QuantumState, hamiltonian: HamiltonianLike, c_ops: CollapseSet,
                t_window: Tuple[float, float], n_trajectories: int, seed: int,
                t_eval: Optional[Sequence[float]] = None,
                e_ops: Optional[Sequence[QuantumOperator]] = None,
                workers: int = 1, batch_size: int = 256) -> EnsembleResult:
    """
    Run an ensemble of trajectories and reduce it in seed order.

    Chunks of seeds may run on worker threads; the reduction does not depend on
    the number of workers.
    """
    if n_trajectories < 1:
        raise ConfigurationError(f"Need at least one trajectory, got {n_trajectories}")
    solver = TrajectorySolver(hamiltonian, c_ops, t_window, t_eval, e_ops)
    rngs = trajectory_rngs(seed, n_trajectories)
    chunks = [rngs[i:i + batch_size] for i in range(0, n_trajectories, batch_size)]

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda chunk: solver.run_batch(psi0, chunk), chunks))
    else:
        results = [solver.run_batch(psi0, chunk) for chunk in chunks]
    records = [record for chunk in results for record in chunk]

    output = c_ops.output_index
    output_times = [record.times(output) for record in records]
    if solver.e_ops:
        stacked = np.stack([record.expectations for record in records])
        mean = stacked.mean(axis=0).T
        spread = stacked.std(axis=0, ddof=1).T if n_trajectories > 1 else np.zeros_like(mean)
        stderr = spread / math.sqrt(n_trajectories)
    else:
        mean = stderr = np.zeros((0, solver.t_eval.size))
    logger.debug(f"Ensemble of {n_trajectories} trajectories: "
                 f"{sum(t.size for t in output_times)} output-channel jumps")
    return EnsembleResult(solver.t_eval, mean, stderr, output_times, n_trajectories)


# ========================= CALIBRATION =========================

@dataclass(frozen=True)
class DriveDiagnostics:
    mean_photon_number: float
    emitter_population: float

    @property
    def saturation_fraction(self) -> float:
        """Emitter population relative to its saturated value of one half."""
        return self.emitter_population / 0.5


def drive_diagnostics(params: SystemParams) -> DriveDiagnostics:
    space = build_space(params.n_max)
    rho = solve_steady_state(params)
    return DriveDiagnostics(
        mean_photon_number=float(rho.expect(space.number).real),
        emitter_population=float(rho.expect(space.emitter_number).real),
    )


def _bracket_root(objective: Callable[[float], float], first_guess: float, what: str,
                  max_doublings: int = 40) -> Tuple[float, float]:
    lower, upper = 0.0, first_guess
    for _ in range(max_doublings):
        if objective(upper) > 0:
            return lower, upper
        lower, upper = upper, 2.0 * upper
    raise CalibrationError(f"{what}: target not reached below amplitude {upper:.3e} rad/s (saturated)")


def calibrate_drive(params: SystemParams, target_n: float, at_detuning: float) -> float:
    """
    CW drive amplitude giving steady-state ⟨a†a⟩ = target_n at the probe detuning.

    Args:
        params: System rates; drive_amp is ignored
        target_n: Desired photon number, 0 < target_n < n_max / 3
        at_detuning: Probe detuning wp - w0 (rad/s)

    Returns:
        Drive amplitude E (rad/s)
    """
    if not 0 < target_n < params.n_max / 3.0:
        raise ConfigurationError(
            f"Target photon number must lie in (0, {params.n_max / 3.0:.3g}) for n_max={params.n_max}, got {target_n}"
        )
    detuned = params.at_probe_detuning(at_detuning)

    def excess(amplitude: float) -> float:
        return mean_photon_number(detuned.with_drive(amplitude)) - target_n

    lower, upper = _bracket_root(excess, params.kappa * math.sqrt(target_n), "Drive calibration")
    amplitude = brentq(excess, lower, upper, xtol=1e-14 * upper, rtol=1e-12)
    diagnostics = drive_diagnostics(detuned.with_drive(amplitude))
    logger.info(
        f"Calibrated drive E={amplitude:.6e} rad/s for <n>={target_n} at detuning {at_detuning:.4e} rad/s "
        f"(emitter population {diagnostics.emitter_population:.3f}, "
        f"saturation fraction {diagnostics.saturation_fraction:.3f})"
    )
    return amplitude


def pulse_time_grid(pulse: PulseShape, kappa: float, points: int = 400) -> np.ndarray:
    start, stop = pulse.window(kappa)
    return np.linspace(start, stop, max(points, 2))


def peak_pulse_photon_number(params: SystemParams, pulse: PulseShape, points: int = 400) -> float:
    """Maximum intracavity ⟨n(t)⟩ over one pulse starting from vacuum."""
    space = build_space(params.n_max)
    grid = pulse_time_grid(pulse, params.kappa, points)
    states = evolve_master(QuantumState.vacuum(space), pulsed_hamiltonian(params, pulse, space),
                           cavity_collapse_set(params, space), grid, max_step=pulse.fwhm / 8.0)
    number = space.number.entries
    return max(float(np.trace(number @ state.data).real) for state in states)


def calibrate_pulse_amplitude(params: SystemParams, pulse: PulseShape, target_n: float,
                              at_detuning: float) -> float:
    """Peak pulse amplitude whose maximum intracavity ⟨n(t)⟩ equals target_n."""
    if not 0 < target_n < params.n_max / 3.0:
        raise ConfigurationError(
            f"Target photon number must lie in (0, {params.n_max / 3.0:.3g}) for n_max={params.n_max}, got {target_n}"
        )
    detuned = params.at_probe_detuning(at_detuning)

    def excess(amplitude: float) -> float:
        return peak_pulse_photon_number(detuned, pulse.with_peak(amplitude)) - target_n

    lower, upper = _bracket_root(excess, params.kappa * math.sqrt(target_n), "Pulse calibration")
    amplitude = brentq(excess, lower, upper, xtol=1e-10 * upper, rtol=1e-8)
    logger.info(f"Calibrated pulse peak amplitude {amplitude:.6e} rad/s for peak <n>={target_n}")
    return amplitude
