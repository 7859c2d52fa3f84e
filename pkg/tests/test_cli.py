"""
End-to-end runs of the blockade CLI on small systems.
"""

import numpy as np
import pytest

from commands import cmd_hbt, cmd_runs, cmd_transistor
from errors import ConfigurationError
from main import main
from run_config import RunConfig
from sim_config import ExitCode
from utils import read_csv

SMALL_CONFIG = """\
system:
  n_max: 4
drive:
  target_n: 0.2
sweep:
  start: -1.0
  stop: 1.0
  points: 5
  detuning: 0.5
  tau_max_ps: 20.0
  tau_points: 5
"""

HBT_CONFIG = """\
seed: 11
system:
  n_max: 4
detector:
  efficiency: 1.0
sweep:
  start: 0.0
  stop: 0.0
  points: 1
  detuning: 0.0
hbt:
  pulses: 40000
  pool_size: 300
  block_size: 10000
  m_max: 8
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.yml"
    path.write_text(SMALL_CONFIG, encoding="utf-8")
    return path


def _run(*argv):
    return main([str(arg) for arg in argv])


def test_empty_cavity_spectrum_is_coherent(tmp_path, small_config):
    code = _run("spectrum", "--config", small_config, "--nmax", 6, "--g", 0, "--out", tmp_path / "run")
    assert code == ExitCode.OK
    parsed = read_csv(tmp_path / "run" / "spectrum.csv")
    assert parsed["columns"] == ["detuning_over_g", "intensity_photons", "g2_zero"]
    assert parsed["header"]["command"] == "spectrum"
    assert len(parsed["header"]["config_hash"]) == 12
    assert "units" in parsed["header"]
    assert len(parsed["rows"]) == 5
    for _, intensity, g2 in parsed["rows"]:
        assert intensity > 0
        assert g2 == pytest.approx(1.0, abs=1e-6)


def test_spectrum_is_deterministic(tmp_path, small_config):
    for name in ("first", "second"):
        assert _run("spectrum", "--config", small_config, "--out", tmp_path / name) == ExitCode.OK
    first = (tmp_path / "first" / "spectrum.csv").read_bytes()
    assert first == (tmp_path / "second" / "spectrum.csv").read_bytes()


def test_g2tau_starts_at_spectrum_value(tmp_path, small_config):
    assert _run("spectrum", "--config", small_config, "--out", tmp_path / "spectrum") == ExitCode.OK
    assert _run("g2tau", "--config", small_config, "--out", tmp_path / "g2tau") == ExitCode.OK
    spectrum = {row[0]: row[2] for row in read_csv(tmp_path / "spectrum" / "spectrum.csv")["rows"]}
    g2tau = read_csv(tmp_path / "g2tau" / "g2tau.csv")
    assert g2tau["columns"] == ["tau_s", "g2"]
    assert g2tau["rows"][0][0] == 0.0
    assert g2tau["rows"][0][1] == pytest.approx(spectrum[0.5], abs=1e-6)


def test_unknown_flag_is_a_usage_error(small_config):
    with pytest.raises(SystemExit) as excinfo:
        _run("spectrum", "--config", small_config, "--bogus")
    assert excinfo.value.code == ExitCode.USAGE
    with pytest.raises(SystemExit) as excinfo:
        _run("reproduce", "fig9")
    assert excinfo.value.code == ExitCode.USAGE


def test_invalid_configuration_exits_one(tmp_path):
    bad = tmp_path / "bad.yml"
    bad.write_text("system:\n  n_max: 0\n", encoding="utf-8")
    assert _run("spectrum", "--config", bad, "--out", tmp_path / "run") == ExitCode.USAGE
    assert _run("spectrum", "--config", tmp_path / "absent.yml") == ExitCode.USAGE
    assert _run("reproduce", "fig2b", "--config", bad) == ExitCode.USAGE


def test_degenerate_steady_state_exits_two(tmp_path, small_config):
    code = _run("spectrum", "--config", small_config, "--g", 0, "--gamma", 0, "--out", tmp_path / "run")
    assert code == ExitCode.NUMERICAL
    assert not (tmp_path / "run" / "spectrum.csv").exists()


def test_runs_are_recorded(tmp_path, small_config, capsys):
    assert _run("spectrum", "--config", small_config, "--out", tmp_path / "ok") == ExitCode.OK
    _run("spectrum", "--config", small_config, "--g", 0, "--gamma", 0, "--out", tmp_path / "failed")
    lines = cmd_runs()
    assert len(lines) == 2
    assert "failed" in lines[0] and "SteadyStateError" in lines[0]
    assert "succeeded" in lines[1]
    assert cmd_runs(command="hbt") == []
    assert "No runs recorded" in capsys.readouterr().out


@pytest.mark.slow
def test_hbt_pipeline_is_deterministic_and_matches_g2map(tmp_path):
    config = tmp_path / "hbt.yml"
    config.write_text(HBT_CONFIG, encoding="utf-8")
    for name in ("first", "second"):
        assert _run("hbt", "--config", config, "--out", tmp_path / name) == ExitCode.OK
    for output in ("histogram.csv", "peaks.csv", "fit.txt"):
        assert (tmp_path / "first" / output).read_bytes() == (tmp_path / "second" / output).read_bytes()

    report = dict(line.split("=", 1)
                  for line in (tmp_path / "first" / "fit.txt").read_text(encoding="utf-8").splitlines())
    assert report["seed"] == "11"
    assert int(report["n_pulses"]) == 40000

    assert _run("g2map", "--config", config, "--out", tmp_path / "map") == ExitCode.OK
    row = read_csv(tmp_path / "map" / "g2map.csv")["rows"][0]
    assert row[3] == 1
    assert row[1] == pytest.approx(float(report["predicted_g2_plateau"]), rel=1e-9)
    assert row[2] == pytest.approx(float(report["predicted_g2_nearest_neighbor"]), rel=1e-9)


@pytest.mark.slow
def test_resonant_pulses_bunch_and_blockade_antibunches(tmp_path):
    config = tmp_path / "map.yml"
    config.write_text(HBT_CONFIG.replace("stop: 0.0\n  points: 1", "stop: 1.5\n  points: 2"), encoding="utf-8")
    assert _run("g2map", "--config", config, "--out", tmp_path / "map") == ExitCode.OK
    (_, resonant, _, _), (_, blockade, _, _) = read_csv(tmp_path / "map" / "g2map.csv")["rows"]
    assert resonant > 1.0
    assert resonant > blockade


TRANSISTOR_CONFIG = """\
system:
  n_max: 3
drive:
  target_n: 0.2
sweep:
  start: 0.3
  stop: 0.5
  points: 2
transistor:
  settle_lifetimes: 5.0
  beat_periods: 1
"""


def test_transistor_grid_must_avoid_gate(tmp_path):
    config = RunConfig.from_yaml(TRANSISTOR_CONFIG.replace("start: 0.3", "start: 0.0").replace("stop: 0.5", "stop: 2.0")
                                 .replace("points: 2", "points: 3"))
    with pytest.raises(ConfigurationError):
        cmd_transistor(config, directory=tmp_path / "run")
    assert not (tmp_path / "run" / "transistor.csv").exists()


@pytest.mark.slow
def test_transistor_sweep_is_labelled_exploratory(tmp_path):
    context = cmd_transistor(RunConfig.from_yaml(TRANSISTOR_CONFIG), directory=tmp_path / "run")
    parsed = read_csv(tmp_path / "run" / "transistor.csv")
    assert parsed["header"]["status"] == "exploratory"
    assert [row[0] for row in parsed["rows"]] == pytest.approx([0.3, 0.5])
    for _, on, off, ratio in parsed["rows"]:
        assert on > 0 and off > 0
        assert ratio == pytest.approx(on / off, rel=1e-9)
    assert context.summary["best_signal_detuning_over_g"] in (0.3, 0.5)


DEVICE_HBT_CONFIG = """\
seed: 5
detector:
  efficiency: {efficiency}
sweep:
  detuning: {detuning}
hbt:
  pulses: {pulses}
  pool_size: {pool_size}
"""


def _device_hbt(tmp_path, detuning, efficiency, pulses, pool_size):
    config = RunConfig.from_yaml(DEVICE_HBT_CONFIG.format(
        detuning=detuning, efficiency=efficiency, pulses=pulses, pool_size=pool_size))
    directory = tmp_path / f"hbt_{detuning}"
    cmd_hbt(config, directory=directory)
    report = dict(line.split("=", 1) for line in (directory / "fit.txt").read_text(encoding="utf-8").splitlines())
    return read_csv(directory / "peaks.csv")["rows"], report


@pytest.mark.slow
@pytest.mark.parametrize("detuning", [0.0, 1.5])
def test_measured_peaks_match_expected_areas(tmp_path, detuning):
    # low efficiency keeps pair counting noise above the shared telegraph noise
    rows, _ = _device_hbt(tmp_path, detuning, efficiency=0.02, pulses=4_000_000, pool_size=2000)
    m, _, measured, expected = (np.array(column, dtype=float) for column in zip(*rows[:21]))
    variance = np.where(m == 0, 2.0, 1.0) * expected
    z = (measured - expected) / np.sqrt(variance)
    assert np.all(np.abs(z) < 4)
    assert np.sum(z ** 2) / m.size < 2


@pytest.mark.slow
@pytest.mark.parametrize("detuning, low, high", [(0.0, 1.12, 1.42), (1.5, 0.78, 0.98)])
def test_nearest_neighbour_g2_brackets(tmp_path, detuning, low, high):
    _, report = _device_hbt(tmp_path, detuning, efficiency=0.2, pulses=1_000_000, pool_size=20_000)
    measured = float(report["g2_nearest_neighbor"])
    assert low <= measured <= high
    assert low <= float(report["predicted_g2_nearest_neighbor"]) <= high
