"""
Exploratory two-tone sweep: a gate tone on the upper polariton and a weak signal
tone scanned around the second-manifold transition.
"""

import logging
from pathlib import Path
from typing import Optional, Tuple

from correlations import run_sweep, signal_transmission
from dynamics import calibrate_drive
from errors import ConfigurationError
from run_config import RunConfig
from utils import plot_curves

from .common import CommandContext, execute

logger = logging.getLogger(__name__)


def _transistor_body(context: CommandContext) -> None:
    config = context.config
    section = config.transistor
    params = config.system_params()
    unit = context.unit
    gate_detuning = config.to_rad(config.drive.calibration_detuning)
    gate_amp = calibrate_drive(params, config.drive.target_n, gate_detuning)
    signal_amp = section.signal_fraction * gate_amp
    gated = params.at_probe_detuning(gate_detuning)
    grid = config.sweep.grid()
    if any(abs(x - config.drive.calibration_detuning) < 1e-9 for x in grid):
        raise ConfigurationError("Signal grid must not contain the gate detuning")

    def evaluate(x: float) -> Tuple[float, float, float, float]:
        beat = (x - config.drive.calibration_detuning) * unit
        on = signal_transmission(gated, gate_amp, signal_amp, beat,
                                 section.settle_lifetimes, section.beat_periods)
        off = signal_transmission(gated, 0.0, signal_amp, beat,
                                  section.settle_lifetimes, section.beat_periods)
        return float(x), on, off, on / off if off > 0 else float("inf")

    rows = run_sweep(evaluate, list(grid), config.workers, "transistor")
    context.session.csv(
        "transistor.csv",
        ["signal_detuning_over_g", "signal_gate_on", "signal_gate_off", "on_off_ratio"],
        rows,
        {"status": "exploratory",
         "units": "detuning in units of g; signal as |<a>|^2 at the signal frequency",
         "gate_detuning_over_g": config.drive.calibration_detuning,
         "gate_amp_rad_s": gate_amp, "signal_amp_rad_s": signal_amp},
    )
    best = max(rows, key=lambda row: row[3])
    context.summary["best_ratio"] = best[3]
    context.summary["best_signal_detuning_over_g"] = best[0]

    if config.plot:
        plot_curves(context.session.path("transistor.png"), [
            {"x": [r[0] for r in rows], "y": [r[1] for r in rows], "label": "gate on"},
            {"x": [r[0] for r in rows], "y": [r[2] for r in rows], "label": "gate off"},
        ], "signal detuning / g", "signal |⟨a⟩|²", title="Two-tone sweep (exploratory)")


def cmd_transistor(config: RunConfig, preset: Optional[str] = None,
                   directory: Optional[Path] = None) -> CommandContext:
    """Write gate-on and gate-off signal transmission to transistor.csv."""
    return execute("transistor", config, _transistor_body, preset=preset, directory=directory)
