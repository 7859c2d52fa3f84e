"""
Run registry listing.
"""

import argparse
import logging
from typing import List, Optional

from database import RunRecord, RunRepository, get_db_session

logger = logging.getLogger(__name__)


def format_run(run: RunRecord) -> str:
    finished = run.finished_at.strftime("%Y-%m-%d %H:%M:%S") if run.finished_at else "-"
    line = f"{run.id:>5}  {run.command:<10} {run.status:<9} {run.config_hash}  seed={run.seed}  {finished}"
    if run.preset:
        line += f"  preset={run.preset}"
    if run.error:
        line += f"  error={run.error}"
    return line


def cmd_runs(limit: int = 20, command: Optional[str] = None, database_url: Optional[str] = None) -> List[str]:
    """Return (and print) one line per recent run, newest first."""
    with get_db_session(database_url) as db:
        lines = [format_run(run) for run in RunRepository.recent_runs(db, limit, command)]
    for line in lines:
        print(line)
    if not lines:
        print("No runs recorded")
    return lines


def register(subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser) -> None:
    runs = subparsers.add_parser("runs", help="List recent runs from the run registry")
    runs.add_argument("--limit", type=int, default=20)
    runs.add_argument("--command", help="Only runs of this sub-command")
    runs.set_defaults(handler=lambda args: cmd_runs(args.limit, args.command))
