"""
Unified utilities for the photon blockade simulator.
Logging, CSV output, output sessions and plotting combined for simplicity.
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from sim_config import settings

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


# ========================= LOGGING =========================

def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """Configure the root logger with a file handler and a console handler."""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    path = Path(log_file or settings.log_file)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        handlers.insert(0, logging.FileHandler(path, encoding='utf-8'))
    except OSError as e:
        logger.warning(f"Cannot open log file {path}: {e}")
    logging.basicConfig(
        level=getattr(logging, (level or settings.log_level).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


class RunLogger:
    """Command lifecycle logging."""

    def __init__(self, command: str):
        self.command = command
        self.started = datetime.now()

    def log_command(self, details: str = ""):
        logger.info(f"Command {self.command} - started - {details}")

    def log_result(self, details: str = ""):
        elapsed = (datetime.now() - self.started).total_seconds()
        logger.info(f"Command {self.command} - finished in {elapsed:.1f}s - {details}")

    def log_error(self, error: str, details: str = ""):
        logger.error(f"Command {self.command} - {error} - {details}")


# ========================= CSV OUTPUT =========================

def format_value(value: Any) -> str:
    """Stable text form of a CSV cell: 12 significant digits for floats."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    try:
        return f"{float(value):.12g}"
    except (TypeError, ValueError):
        return str(value)


def write_csv(path: Union[str, Path], columns: Sequence[str], rows: Iterable[Sequence[Any]],
              header: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write a UTF-8 CSV file with '#'-prefixed header lines.

    Args:
        path: Destination file
        columns: Column names, including units, e.g. "tau_s"
        rows: Row values
        header: Key/value pairs written as "# key: value" before the column line
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cells = np.array([[format_value(v) for v in row] for row in rows], dtype=object).reshape(-1, len(columns))
    lines = [f"# {key}: {value}" for key, value in (header or {}).items()] + [",".join(columns)]
    with path.open('w', encoding='utf-8', newline='\n') as handle:
        np.savetxt(handle, cells, fmt="%s", delimiter=",", header="\n".join(lines), comments="")
    return path


def read_csv(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a file written by write_csv into header, columns and float rows."""
    header: Dict[str, str] = {}
    columns: List[str] = []
    rows: List[List[float]] = []
    with Path(path).open('r', encoding='utf-8') as handle:
        for line in handle:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                header[key.strip()] = value.strip()
            elif not columns:
                columns = line.split(",")
            elif line:
                rows.append([float(cell) for cell in line.split(",")])
    return {"header": header, "columns": columns, "rows": rows}


class OutputSession:
    """
    Tracks files written by one command.

    Used as a context manager: when the block raises, every file registered so far
    is deleted so no partial output survives.
    """

    def __init__(self, directory: Union[str, Path], header: Optional[Dict[str, Any]] = None):
        self.directory = Path(directory)
        self.header = dict(header or {})
        self.files: List[Path] = []

    def __enter__(self) -> "OutputSession":
        self.directory.mkdir(parents=True, exist_ok=True)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            self.discard()
        return False

    def path(self, name: str) -> Path:
        target = self.directory / name
        self.files.append(target)
        return target

    def csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]],
            extra_header: Optional[Dict[str, Any]] = None) -> Path:
        header = dict(self.header)
        header.update(extra_header or {})
        return write_csv(self.path(name), columns, rows, header)

    def discard(self) -> None:
        for target in self.files:
            try:
                target.unlink(missing_ok=True)
            except OSError as e:
                logger.error(f"Could not remove partial output {target}: {e}")
        if self.files:
            logger.warning(f"Removed {len(self.files)} partial output file(s) from {self.directory}")
        self.files = []

    @property
    def names(self) -> List[str]:
        return [str(target) for target in self.files]


# ========================= PLOTS =========================

def plot_curves(path: Union[str, Path], series: Sequence[Dict[str, Any]], xlabel: str, ylabel: str,
                title: str = "", reference: Optional[float] = None, style: str = "-") -> Path:
    """
    Render one or more (x, y) series to a PNG file.

    Each series is a dict with keys "x", "y" and optionally "label", "yerr".
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    figure, axes = plt.subplots(figsize=(6.0, 4.0))
    try:
        for item in series:
            if item.get("yerr") is not None:
                axes.errorbar(item["x"], item["y"], yerr=item["yerr"], fmt="o", ms=3, label=item.get("label"))
            else:
                axes.plot(item["x"], item["y"], style, label=item.get("label"))
        if reference is not None:
            axes.axhline(reference, color="grey", lw=0.8, ls="--")
        axes.set_xlabel(xlabel)
        axes.set_ylabel(ylabel)
        if title:
            axes.set_title(title)
        if any(item.get("label") for item in series):
            axes.legend()
        figure.tight_layout()
        figure.savefig(path, dpi=settings.plot_dpi)
    finally:
        plt.close(figure)
    return Path(path)
