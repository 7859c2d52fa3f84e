"""
Full-model pulsed g²(0) versus probe detuning: quantum pulse statistics, blinking
mixture, background and both normalisations, with no sampling noise.
"""

import argparse
import logging
import math
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from blinking import model_prediction
from correlations import run_sweep
from errors import NumericalError
from run_config import RunConfig
from utils import plot_curves

from .coincidence import calibrated_pulse
from .common import CommandContext, execute, resolve_config

logger = logging.getLogger(__name__)


def _g2map_body(context: CommandContext) -> None:
    config = context.config
    params = config.system_params()
    pulse = calibrated_pulse(config)
    telegraph = config.telegraph()
    detector = config.detector_model()
    grid = config.sweep.grid()

    def evaluate(x: float) -> Tuple[float, float, float, int]:
        detuning = config.to_rad(x)
        try:
            prediction = model_prediction(params, pulse, detuning, telegraph,
                                          config.background_model(detuning), detector,
                                          config.hbt.m_max, config.pulse.estimator)
        except NumericalError as e:
            logger.warning(f"g2map point {x:g} failed: {e}")
            return float(x), math.nan, math.nan, 0
        return float(x), prediction.g2_plateau, prediction.g2_nearest, 1

    rows = run_sweep(evaluate, list(grid), config.workers, "g2map")
    context.session.csv(
        "g2map.csv",
        ["detuning_over_g", "g2_plateau", "g2_nearest_neighbor", "ok"],
        rows,
        {"units": "detuning in units of g", "estimator": config.pulse.estimator,
         "pulse_peak_amp_rad_s": pulse.peak_amp},
    )

    failed = sum(1 for row in rows if not row[3])
    context.summary["points"] = len(rows)
    context.summary["failed_points"] = failed
    if failed:
        logger.warning(f"g2map finished with {failed} failed point(s) of {len(rows)}")

    if config.plot:
        values = np.array([row[1:3] for row in rows], dtype=float)
        plot_curves(context.session.path("g2map.png"), [
            {"x": grid, "y": values[:, 0], "label": "plateau"},
            {"x": grid, "y": values[:, 1], "label": "nearest neighbour"},
        ], "Δω_p / g", "ḡ²(0)", title="Pulsed zero-delay correlation", reference=1.0)


def cmd_g2map(config: RunConfig, preset: Optional[str] = None,
              directory: Optional[Path] = None) -> CommandContext:
    """Write the full-model ḡ²(0) curve to g2map.csv."""
    return execute("g2map", config, _g2map_body, preset=preset, directory=directory)


def register(subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser) -> None:
    g2map = subparsers.add_parser("g2map", parents=[parent],
                                  help="Full-model pulsed g²(0) versus probe detuning")
    g2map.set_defaults(handler=lambda args: cmd_g2map(resolve_config(args)))
