"""
Figure presets: one YAML file per preset under presets/, dispatched to a command.
"""

import argparse
import logging
from pathlib import Path
from typing import Callable, Dict, List

from run_config import RunConfig
from sim_config import Preset

from .coincidence import cmd_hbt
from .common import CommandContext, resolve_config
from .g2map import cmd_g2map
from .spectrum import cmd_g2tau, cmd_spectrum
from .transistor import cmd_transistor

logger = logging.getLogger(__name__)


def _hbt_series(config: RunConfig, preset: str) -> List[CommandContext]:
    """One HBT run per sweep grid point, each in its own subdirectory."""
    root = Path(config.output_dir)
    contexts = []
    for x in config.sweep.grid():
        point = config.with_overrides({"sweep.detuning": float(x)})
        contexts.append(cmd_hbt(point, preset=preset, directory=root / f"detuning_{float(x):g}"))
    return contexts


PRESET_COMMANDS: Dict[str, Callable] = {
    Preset.FIG2B: cmd_spectrum,
    Preset.FIG2C: cmd_spectrum,
    Preset.FIG2D: cmd_g2tau,
    Preset.FIG3: _hbt_series,
    Preset.FIG4: cmd_g2map,
    Preset.TRANSISTOR_SWEEP: cmd_transistor,
}


def cmd_reproduce(preset: str, config: RunConfig):
    logger.info(f"Reproducing preset {preset} ({config.config_hash()})")
    return PRESET_COMMANDS[preset](config, preset=preset)


def register(subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser) -> None:
    reproduce = subparsers.add_parser("reproduce", parents=[parent], help="Run a figure preset")
    reproduce.add_argument("preset", choices=Preset.ALL)
    reproduce.set_defaults(handler=lambda args: cmd_reproduce(args.preset, resolve_config(args, args.preset)))
