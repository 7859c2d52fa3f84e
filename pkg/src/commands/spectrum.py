"""
CW spectra: transmitted intensity and g²(0) versus probe detuning, and g²(τ).
"""

import argparse
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from correlations import g2_spectrum, g2_tau_cw, transmission_spectrum
from dynamics import calibrate_drive
from run_config import RunConfig
from sim_config import PS
from utils import plot_curves

from .common import CommandContext, execute, resolve_config

logger = logging.getLogger(__name__)


# ===== SPECTRUM =====

def _spectrum_body(context: CommandContext) -> None:
    config = context.config
    params = config.system_params()
    grid = config.sweep.grid() * context.unit
    calibration = config.to_rad(config.drive.calibration_detuning)

    intensity = transmission_spectrum(params, grid, target_n=config.drive.target_n,
                                      workers=config.workers, calibration_detuning=calibration)
    g2 = g2_spectrum(params, grid, target_n=config.drive.target_n,
                     workers=config.workers, calibration_detuning=calibration)

    context.session.csv(
        "spectrum.csv",
        ["detuning_over_g", "intensity_photons", "g2_zero"],
        zip(g2.xs, intensity.values, g2.values),
        {"units": "detuning in units of g; intensity as intracavity <a+a>",
         "drive_amp_rad_s": intensity.params_snapshot.drive_amp},
    )

    window = (g2.xs >= 1.0) & (g2.xs <= 2.0)
    if window.any():
        index = int(np.argmin(np.where(window, g2.values, np.inf)))
        context.summary["blockade_detuning_over_g"] = float(g2.xs[index])
        context.summary["blockade_g2"] = float(g2.values[index])
    context.summary["g2_max"] = float(np.max(g2.values))

    if config.plot:
        plot_curves(context.session.path("spectrum_intensity.png"),
                    [{"x": intensity.xs, "y": intensity.values}],
                    "Δω_p / g", "⟨a†a⟩", title="Transmitted intensity")
        plot_curves(context.session.path("spectrum_g2.png"),
                    [{"x": g2.xs, "y": g2.values}],
                    "Δω_p / g", "g²(0)", title="Zero-delay correlation", reference=1.0)


def cmd_spectrum(config: RunConfig, preset: Optional[str] = None,
                 directory: Optional[Path] = None) -> CommandContext:
    """Write intensity and g²(0) spectra to spectrum.csv."""
    return execute("spectrum", config, _spectrum_body, preset=preset, directory=directory)


# ===== G2 (TAU) =====

def _g2tau_body(context: CommandContext) -> None:
    config = context.config
    params = config.system_params()
    detuning = config.to_rad(config.sweep.detuning)
    drive = calibrate_drive(params, config.drive.target_n, config.to_rad(config.drive.calibration_detuning))
    curve = g2_tau_cw(params.with_drive(drive), detuning, config.sweep.tau_grid())

    context.session.csv(
        "g2tau.csv",
        ["tau_s", "g2"],
        ((tau, value) for tau, value, _ in curve.to_rows()),
        {"units": "tau in seconds", "detuning_over_g": config.sweep.detuning, "drive_amp_rad_s": drive},
    )
    context.summary["g2_zero"] = float(curve.values[0])
    context.summary["detuning_over_g"] = config.sweep.detuning

    if config.plot:
        plot_curves(context.session.path("g2tau.png"),
                    [{"x": curve.xs / PS, "y": curve.values}],
                    "τ (ps)", "g²(τ)", title=f"Δω_p/g = {config.sweep.detuning:g}", reference=1.0)


def cmd_g2tau(config: RunConfig, preset: Optional[str] = None,
              directory: Optional[Path] = None) -> CommandContext:
    """Write g²(τ) at sweep.detuning to g2tau.csv."""
    return execute("g2tau", config, _g2tau_body, preset=preset, directory=directory)


# ===== REGISTRATION =====

def register(subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser) -> None:
    spectrum = subparsers.add_parser("spectrum", parents=[parent],
                                     help="CW intensity and g²(0) versus probe detuning")
    spectrum.set_defaults(handler=lambda args: cmd_spectrum(resolve_config(args)))

    g2tau = subparsers.add_parser("g2tau", parents=[parent], help="CW g²(τ) at one probe detuning")
    g2tau.set_defaults(handler=lambda args: cmd_g2tau(resolve_config(args)))
