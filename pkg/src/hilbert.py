"""
Truncated emitter x cavity Hilbert space, the driven Jaynes-Cummings Hamiltonian
in the probe rotating frame, and the dressed-state ladder.

Basis ordering: index = emitter * (n_max + 1) + n, emitter 0 = ground, 1 = excited.
The emitter index varies slowest.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from errors import ConfigurationError
from sim_config import Branch, DeviceDefaults, ghz_to_rad

logger = logging.getLogger(__name__)


# ========================= PARAMETERS =========================

class SystemParams(BaseModel):
    """Physical rates of the coupled system, all in rad/s.

    kappa is the cavity FIELD decay rate (photon lifetime 1/(2 kappa)), gamma the
    emitter energy decay rate into free space. Detunings are measured from the
    probe: delta_c = w0 - wp, delta_a = wa - wp.
    """

    model_config = ConfigDict(frozen=True)

    g: float = Field(ge=0.0, description="Emitter-cavity coupling rate")
    kappa: float = Field(gt=0.0, description="Cavity field decay rate")
    gamma: float = Field(default=0.0, ge=0.0, description="Emitter energy decay rate")
    delta_c: float = Field(default=0.0, description="Cavity detuning from the probe")
    delta_a: float = Field(default=0.0, description="Emitter detuning from the probe")
    drive_amp: float = Field(default=0.0, ge=0.0, description="Coherent drive amplitude E")
    n_max: int = Field(default=DeviceDefaults.N_MAX, ge=1, description="Fock truncation")

    @classmethod
    def from_ghz(cls, g: float, kappa: float, gamma: float = 0.0,
                 delta_c: float = 0.0, delta_a: float = 0.0,
                 drive_amp: float = 0.0, n_max: int = DeviceDefaults.N_MAX) -> "SystemParams":
        """Build parameters from GHz/2π values."""
        return cls(
            g=ghz_to_rad(g), kappa=ghz_to_rad(kappa), gamma=ghz_to_rad(gamma),
            delta_c=ghz_to_rad(delta_c), delta_a=ghz_to_rad(delta_a),
            drive_amp=ghz_to_rad(drive_amp), n_max=n_max,
        )

    @classmethod
    def device(cls, n_max: int = DeviceDefaults.N_MAX) -> "SystemParams":
        return cls.from_ghz(DeviceDefaults.G_GHZ, DeviceDefaults.KAPPA_GHZ,
                            DeviceDefaults.GAMMA_GHZ, n_max=n_max)

    @property
    def emitter_cavity_detuning(self) -> float:
        return self.delta_a - self.delta_c

    @property
    def probe_detuning(self) -> float:
        """wp - w0."""
        return -self.delta_c

    @property
    def detuning_unit(self) -> float:
        """Unit of the dimensionless detuning axis: g, or kappa for an empty cavity."""
        return self.g if self.g > 0 else self.kappa

    @property
    def is_strongly_coupled(self) -> bool:
        return self.g > self.kappa / 2 and self.g > self.gamma / 2

    def at_probe_detuning(self, probe_detuning: float) -> "SystemParams":
        """Retune the probe to wp = w0 + probe_detuning, keeping wa - w0 fixed."""
        offset = self.emitter_cavity_detuning
        return self.model_copy(update={
            "delta_c": -probe_detuning,
            "delta_a": -probe_detuning + offset,
        })

    def with_drive(self, drive_amp: float) -> "SystemParams":
        return self.model_copy(update={"drive_amp": float(drive_amp)})

    def with_cutoff(self, n_max: int) -> "SystemParams":
        return self.model_copy(update={"n_max": int(n_max)})

    def dark(self) -> "SystemParams":
        """The blinking dark state: emitter decoupled (g -> 0)."""
        return self.model_copy(update={"g": 0.0})


# ========================= OPERATORS =========================

@dataclass(frozen=True, eq=False)
class QuantumOperator:
    """Dense complex square matrix acting on a truncated space."""

    entries: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.entries, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ConfigurationError(f"Operator must be square, got shape {matrix.shape}")
        matrix.setflags(write=False)
        object.__setattr__(self, "entries", matrix)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def dag(self) -> "QuantumOperator":
        return QuantumOperator(self.entries.conj().T)

    def is_hermitian(self, rtol: float = 1e-12) -> bool:
        scale = float(np.max(np.abs(self.entries))) if self.entries.size else 0.0
        deviation = float(np.max(np.abs(self.entries - self.entries.conj().T)))
        return deviation <= rtol * scale if scale > 0 else deviation == 0.0

    def __add__(self, other: "QuantumOperator") -> "QuantumOperator":
        return QuantumOperator(self.entries + other.entries)

    def __sub__(self, other: "QuantumOperator") -> "QuantumOperator":
        return QuantumOperator(self.entries - other.entries)

    def __mul__(self, scalar: complex) -> "QuantumOperator":
        return QuantumOperator(self.entries * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other: "QuantumOperator") -> "QuantumOperator":
        return QuantumOperator(self.entries @ other.entries)


@dataclass(frozen=True)
class TruncatedSpace:
    """Emitter (2 levels) x Fock space truncated at n_max photons."""

    n_max: int

    def __post_init__(self):
        if self.n_max < 1:
            raise ConfigurationError(
                f"n_max must be >= 1 to represent one excitation, got {self.n_max}"
            )

    @property
    def fock_dim(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return 2 * self.fock_dim

    def index(self, emitter: int, n: int) -> int:
        if emitter not in (0, 1) or not 0 <= n <= self.n_max:
            raise ConfigurationError(f"No basis state |{emitter},{n}> for n_max={self.n_max}")
        return emitter * self.fock_dim + n

    def split(self, index: int) -> Tuple[int, int]:
        """Inverse of index(): returns (emitter, n)."""
        if not 0 <= index < self.dim:
            raise ConfigurationError(f"Index {index} outside dimension {self.dim}")
        return divmod(index, self.fock_dim)

    def basis_ket(self, emitter: int, n: int) -> np.ndarray:
        ket = np.zeros(self.dim, dtype=complex)
        ket[self.index(emitter, n)] = 1.0
        return ket

    @cached_property
    def destroy(self) -> QuantumOperator:
        """Cavity annihilation operator a."""
        fock = np.diag(np.sqrt(np.arange(1, self.fock_dim)), k=1)
        return QuantumOperator(np.kron(np.eye(2), fock))

    @cached_property
    def create(self) -> QuantumOperator:
        return self.destroy.dag()

    @cached_property
    def sigma(self) -> QuantumOperator:
        """Emitter lowering operator |g><e|."""
        lowering = np.array([[0.0, 1.0], [0.0, 0.0]])
        return QuantumOperator(np.kron(lowering, np.eye(self.fock_dim)))

    @cached_property
    def sigma_dag(self) -> QuantumOperator:
        return self.sigma.dag()

    @cached_property
    def number(self) -> QuantumOperator:
        return self.create @ self.destroy

    @cached_property
    def emitter_number(self) -> QuantumOperator:
        return self.sigma_dag @ self.sigma

    @cached_property
    def excitation_number(self) -> QuantumOperator:
        return self.number + self.emitter_number

    @cached_property
    def identity(self) -> QuantumOperator:
        return QuantumOperator(np.eye(self.dim))

    @cached_property
    def quadrature(self) -> QuantumOperator:
        """a + a†, the operator the probe couples to."""
        return self.destroy + self.create


def build_space(n_max: int) -> TruncatedSpace:
    """Construct the truncated space for a Fock cutoff of n_max photons."""
    return TruncatedSpace(int(n_max))


def jc_hamiltonian(params: SystemParams, space: Optional[TruncatedSpace] = None) -> QuantumOperator:
    """
    Driven Jaynes-Cummings Hamiltonian in the probe rotating frame.

    H = delta_c a†a + delta_a σ†σ + g (a†σ + aσ†) + E (a + a†)

    Args:
        params: System rates
        space: Truncated space; built from params.n_max when omitted

    Returns:
        Hermitian QuantumOperator
    """
    space = space or build_space(params.n_max)
    if space.n_max != params.n_max:
        raise ConfigurationError(f"Space cutoff {space.n_max} differs from params.n_max={params.n_max}")
    a, ad = space.destroy, space.create
    sm, sp = space.sigma, space.sigma_dag
    hamiltonian = (
        params.delta_c * space.number
        + params.delta_a * space.emitter_number
        + params.g * (ad @ sm + a @ sp)
        + params.drive_amp * space.quadrature
    )
    return hamiltonian


# ========================= DRESSED LADDER =========================

@dataclass(frozen=True)
class ManifoldLevel:
    """One dressed state |n,±> of the Jaynes-Cummings ladder."""
    n: int
    branch: str
    energy: float


def ground_energy() -> float:
    return 0.0


def _check_resonant(params: SystemParams) -> None:
    scale = max(abs(params.delta_a), abs(params.delta_c), params.g, 1.0)
    if abs(params.emitter_cavity_detuning) > 1e-12 * scale:
        raise ConfigurationError(
            "Dressed energies are defined at zero emitter-cavity detuning, "
            f"got delta_a - delta_c = {params.emitter_cavity_detuning:.3e} rad/s"
        )


def _frame_frequency(params: SystemParams, omega0: Optional[float]) -> float:
    return params.delta_c if omega0 is None else float(omega0)


def dressed_energies(params: SystemParams, n: int,
                     omega0: Optional[float] = None) -> Tuple[ManifoldLevel, ManifoldLevel]:
    """
    Analytic energies of manifold n: n w0 ± g sqrt(n).

    Args:
        params: System rates (emitter and cavity must be resonant)
        n: Excitation number, 1..n_max
        omega0: Cavity frequency in the chosen frame; defaults to delta_c,
            the rotating-frame value

    Returns:
        (upper, lower) levels
    """
    if not 1 <= n <= params.n_max:
        raise ConfigurationError(f"Manifold n={n} outside 1..{params.n_max}")
    _check_resonant(params)
    w0 = _frame_frequency(params, omega0)
    split = params.g * math.sqrt(n)
    return (
        ManifoldLevel(n=n, branch=Branch.PLUS, energy=n * w0 + split),
        ManifoldLevel(n=n, branch=Branch.MINUS, energy=n * w0 - split),
    )


def transition_frequencies(params: SystemParams, n_from: int,
                           omega0: Optional[float] = None,
                           include_cross: bool = False) -> List[Tuple[str, float]]:
    """
    Frequencies of |n,±> -> |n+1,±> ladder transitions.

    n_from = 0 gives the vacuum-to-polariton lines w0 ± g. With include_cross the
    branch-changing lines |n,±> -> |n+1,∓> are appended, labelled "+-" and "-+".
    """
    if not 0 <= n_from < params.n_max:
        raise ConfigurationError(f"Transition origin n={n_from} outside 0..{params.n_max - 1}")
    _check_resonant(params)
    w0 = _frame_frequency(params, omega0)
    g = params.g
    upper, lower = math.sqrt(n_from + 1), math.sqrt(n_from)
    lines = [
        (Branch.PLUS, w0 + g * (upper - lower)),
        (Branch.MINUS, w0 - g * (upper - lower)),
    ]
    if include_cross and n_from >= 1:
        lines.append((Branch.PLUS + Branch.MINUS, w0 - g * (upper + lower)))
        lines.append((Branch.MINUS + Branch.PLUS, w0 + g * (upper + lower)))
    return lines


def manifold_eigenvalues(params: SystemParams, n: int) -> np.ndarray:
    """
    Numerically diagonalised energies of excitation manifold n, ascending.

    Only meaningful with drive_amp = 0, where H conserves a†a + σ†σ and is block
    diagonal in {|g,n>, |e,n-1>}.
    """
    if params.drive_amp != 0.0:
        raise ConfigurationError("Excitation number is only conserved without drive")
    if not 1 <= n <= params.n_max:
        raise ConfigurationError(f"Manifold n={n} outside 1..{params.n_max}")
    space = build_space(params.n_max)
    block = [space.index(0, n), space.index(1, n - 1)]
    hamiltonian = jc_hamiltonian(params, space).entries
    return np.linalg.eigvalsh(hamiltonian[np.ix_(block, block)])


def truncation_converged(params: SystemParams,
                         observable: Callable[[SystemParams], float],
                         rtol: float = 5e-3) -> Tuple[bool, float]:
    """
    Compare an observable at n_max and 2 n_max.

    Returns:
        (converged, relative change)
    """
    coarse = observable(params)
    fine = observable(params.with_cutoff(2 * params.n_max))
    scale = max(abs(fine), 1e-300)
    change = abs(fine - coarse) / scale
    converged = change < rtol
    if converged:
        logger.debug(f"Cutoff n_max={params.n_max} converged (relative change {change:.2e})")
    else:
        logger.warning(f"Cutoff n_max={params.n_max} not converged: relative change {change:.2e} >= {rtol}")
    return converged, change
