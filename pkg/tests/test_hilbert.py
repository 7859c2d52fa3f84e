import math

import numpy as np
import pytest
from pydantic import ValidationError

from errors import ConfigurationError
from hilbert import (
    QuantumOperator,
    SystemParams,
    build_space,
    dressed_energies,
    ground_energy,
    jc_hamiltonian,
    manifold_eigenvalues,
    transition_frequencies,
    truncation_converged,
)
from dynamics import mean_photon_number
from sim_config import GHZ, Branch


def test_ghz_conversion_is_exact():
    params = SystemParams.from_ghz(g=16.0, kappa=16.0, gamma=0.1)
    assert params.g == 16.0 * 2.0 * math.pi * 1.0e9
    assert params.kappa == 16.0 * GHZ
    assert params.gamma == 0.1 * GHZ


def test_device_params_are_strongly_coupled(device_params):
    assert device_params.is_strongly_coupled
    assert device_params.detuning_unit == device_params.g


def test_empty_cavity_detuning_unit_is_kappa():
    params = SystemParams.from_ghz(g=0.0, kappa=16.0, gamma=0.1)
    assert params.detuning_unit == params.kappa


def test_cutoff_below_one_is_rejected():
    with pytest.raises(ValidationError):
        SystemParams.from_ghz(g=16.0, kappa=16.0, n_max=0)
    with pytest.raises(ConfigurationError):
        build_space(0)


def test_probe_detuning_keeps_emitter_cavity_offset():
    params = SystemParams.from_ghz(g=16.0, kappa=16.0, delta_c=0.0, delta_a=3.0)
    retuned = params.at_probe_detuning(5.0 * GHZ)
    assert retuned.probe_detuning == pytest.approx(5.0 * GHZ)
    assert retuned.emitter_cavity_detuning == pytest.approx(params.emitter_cavity_detuning)


def test_basis_index_round_trip():
    space = build_space(3)
    assert space.dim == 8
    assert space.index(1, 0) == 4
    for index in range(space.dim):
        assert space.index(*space.split(index)) == index
    with pytest.raises(ConfigurationError):
        space.index(0, 4)


def test_ladder_operators():
    space = build_space(5)
    a, ad = space.destroy.entries, space.create.entries
    commutator = a @ ad - ad @ a
    diagonal = np.real(np.diag(commutator))
    # [a, a†] = 1 on every Fock level except the truncation edge
    for index in range(space.dim):
        _, n = space.split(index)
        expected = 1.0 if n < space.n_max else -float(space.n_max)
        assert diagonal[index] == pytest.approx(expected)
    assert space.sigma.entries[space.index(0, 2), space.index(1, 2)] == 1.0
    assert np.allclose(space.excitation_number.entries,
                       np.diag([space.split(i)[0] + space.split(i)[1] for i in range(space.dim)]))


def test_operator_entries_are_read_only():
    space = build_space(2)
    with pytest.raises(ValueError):
        space.destroy.entries[0, 1] = 5.0
    with pytest.raises(ConfigurationError):
        QuantumOperator(np.zeros((2, 3)))


def test_hamiltonian_is_hermitian(device_params):
    driven = device_params.with_drive(0.3 * device_params.kappa).at_probe_detuning(0.7 * device_params.g)
    assert jc_hamiltonian(driven).is_hermitian()


def test_hamiltonian_rejects_mismatched_space(device_params):
    with pytest.raises(ConfigurationError):
        jc_hamiltonian(device_params, build_space(3))


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_manifold_eigenvalues_match_dressed_energies(n):
    shift = 2.0 * GHZ
    params = SystemParams.from_ghz(g=16.0, kappa=16.0, gamma=0.1, n_max=6).model_copy(
        update={"delta_c": shift, "delta_a": shift})
    upper, lower = dressed_energies(params, n)
    numeric = manifold_eigenvalues(params, n)
    assert upper.branch == Branch.PLUS and lower.branch == Branch.MINUS
    assert numeric == pytest.approx([lower.energy, upper.energy], rel=1e-12, abs=1e-3)
    assert upper.energy - lower.energy == pytest.approx(2.0 * params.g * math.sqrt(n))


def test_dressed_energies_need_resonance():
    params = SystemParams.from_ghz(g=16.0, kappa=16.0, delta_a=1.0)
    with pytest.raises(ConfigurationError):
        dressed_energies(params, 1)


def test_manifold_eigenvalues_need_zero_drive(device_params):
    with pytest.raises(ConfigurationError):
        manifold_eigenvalues(device_params.with_drive(1.0), 1)


def test_transition_frequencies(device_params):
    g = device_params.g
    lines = dict(transition_frequencies(device_params, 0, omega0=0.0))
    assert lines[Branch.PLUS] == pytest.approx(g)
    assert lines[Branch.MINUS] == pytest.approx(-g)
    second = dict(transition_frequencies(device_params, 1, omega0=0.0, include_cross=True))
    assert second[Branch.PLUS] == pytest.approx(g * (math.sqrt(2.0) - 1.0))
    assert second["+-"] == pytest.approx(-g * (math.sqrt(2.0) + 1.0))
    assert second["-+"] == pytest.approx(g * (math.sqrt(2.0) + 1.0))


def test_weak_drive_converges_in_cutoff(device_params):
    weak = device_params.with_drive(0.05 * device_params.kappa).at_probe_detuning(device_params.g)
    converged, change = truncation_converged(weak, mean_photon_number)
    assert converged
    assert change < 5e-3


def test_dark_state_decouples_emitter(device_params):
    dark = device_params.dark()
    assert dark.g == 0.0
    assert dark.kappa == device_params.kappa
    assert not dark.is_strongly_coupled
    assert dressed_energies(dark, 2)[0].energy == dressed_energies(dark, 2)[1].energy
    assert ground_energy() == 0.0
