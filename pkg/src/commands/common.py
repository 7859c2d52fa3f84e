"""
Shared command plumbing: global flags, config resolution, run recording.
"""

import argparse
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional

from database import DatabaseManager, RunRepository
from errors import ConfigurationError
from run_config import RunConfig, load_preset
from sim_config import settings
from utils import OutputSession, RunLogger

logger = logging.getLogger(__name__)

# Flag destination -> dotted RunConfig key
FLAG_OVERRIDES = {
    "seed": "seed",
    "nmax": "system.n_max",
    "g": "system.g_ghz",
    "kappa": "system.kappa_ghz",
    "gamma": "system.gamma_ghz",
    "detuning": "sweep.detuning",
    "pulses": "hbt.pulses",
    "workers": "workers",
    "out": "output_dir",
}


def global_flags() -> argparse.ArgumentParser:
    """Parent parser with the flags every sub-command accepts."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", metavar="PATH", help="YAML run configuration")
    parent.add_argument("--out", metavar="DIR", help="Output directory")
    parent.add_argument("--seed", type=int, metavar="N", help="Random seed")
    parent.add_argument("--nmax", type=int, metavar="N", help="Fock-space cutoff")
    parent.add_argument("--g", type=float, metavar="GHZ", help="Coupling g/2π in GHz")
    parent.add_argument("--kappa", type=float, metavar="GHZ", help="Cavity field decay κ/2π in GHz")
    parent.add_argument("--gamma", type=float, metavar="GHZ", help="Emitter decay γ/2π in GHz")
    parent.add_argument("--detuning", type=float, metavar="X", help="Probe detuning in units of g")
    parent.add_argument("--pulses", type=int, metavar="N", help="Number of pulses for HBT synthesis")
    parent.add_argument("--workers", type=int, metavar="N", help="Worker threads")
    parent.add_argument("--plot", action="store_true", help="Render PNG plots next to the CSV files")
    parent.add_argument("--preset-dir", metavar="DIR", help="Directory holding preset YAML files")
    return parent


def resolve_config(args: argparse.Namespace, preset: Optional[str] = None) -> RunConfig:
    """Preset or config file (or defaults), then command-line overrides."""
    if preset and args.config:
        raise ConfigurationError("--config cannot be combined with a preset")
    if preset:
        config = load_preset(preset, args.preset_dir)
    elif args.config:
        config = RunConfig.load(args.config)
    else:
        config = RunConfig()
    overrides: Dict[str, Any] = {key: getattr(args, flag, None) for flag, key in FLAG_OVERRIDES.items()}
    if getattr(args, "plot", False):
        overrides["plot"] = True
    return config.with_overrides(overrides)


@dataclass
class CommandContext:
    """Everything a command body needs."""

    config: RunConfig
    session: OutputSession
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def unit(self) -> float:
        return self.config.detuning_unit()


def csv_header(command: str, config: RunConfig) -> Dict[str, Any]:
    return {
        "command": command,
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "g_ghz": config.system.g_ghz,
        "kappa_ghz": config.system.kappa_ghz,
        "gamma_ghz": config.system.gamma_ghz,
        "n_max": config.system.n_max,
    }


def _record(action: Callable[[Any], Any]) -> Any:
    """Run a registry action; registry problems never fail a simulation."""
    if not settings.record_runs:
        return None
    try:
        with DatabaseManager().get_session() as db:
            return action(db)
    except Exception as e:
        logger.warning(f"Run registry unavailable: {e}")
        return None


def execute(command: str, config: RunConfig, body: Callable[[CommandContext], None],
            preset: Optional[str] = None, directory: Optional[Path] = None) -> CommandContext:
    """
    Run a command body inside an output session and the run registry.

    Raises whatever the body raises, after removing partial output and marking
    the run failed.
    """
    run_logger = RunLogger(command)
    run_logger.log_command(f"config_hash={config.config_hash()} seed={config.seed}")
    run_id = _record(lambda db: RunRepository.create_run(
        db, command, config.config_hash(), seed=config.seed, preset=preset).id)

    target = Path(directory or config.output_dir)
    try:
        with OutputSession(target, csv_header(command, config)) as session:
            context = CommandContext(config=config, session=session)
            body(context)
    except Exception as e:
        run_logger.log_error(type(e).__name__, str(e))
        if run_id is not None:
            _record(lambda db: RunRepository.fail_run(db, run_id, f"{type(e).__name__}: {e}"))
        raise

    if run_id is not None:
        _record(lambda db: RunRepository.finish_run(db, run_id, session.names, context.summary))
    run_logger.log_result(", ".join(f"{k}={v}" for k, v in context.summary.items()))
    return context
