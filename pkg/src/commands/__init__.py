"""
Sub-commands of the photon blockade simulator.
Each module registers its own sub-parsers.
"""

import argparse

from . import coincidence, g2map, reproduce, runs, spectrum
from .coincidence import cmd_hbt
from .common import global_flags, resolve_config
from .g2map import cmd_g2map
from .reproduce import cmd_reproduce
from .runs import cmd_runs
from .spectrum import cmd_g2tau, cmd_spectrum
from .transistor import cmd_transistor

MODULES = [spectrum, coincidence, g2map, reproduce, runs]


def register_all(subparsers: argparse._SubParsersAction) -> None:
    parent = global_flags()
    for module in MODULES:
        module.register(subparsers, parent)


__all__ = [
    'register_all', 'global_flags', 'resolve_config',
    'cmd_spectrum', 'cmd_g2tau', 'cmd_hbt', 'cmd_g2map', 'cmd_reproduce', 'cmd_runs', 'cmd_transistor',
]
