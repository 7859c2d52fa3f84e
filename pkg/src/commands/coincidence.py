"""
HBT pipeline: synthesise a click stream, histogram it, fit the blinking envelope
and normalise the zero-delay peak.
"""

import argparse
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from blinking import (
    emission_pools,
    model_prediction,
    pool_prediction,
    synthesize_click_stream,
    write_click_stream,
)
from dynamics import calibrate_pulse_amplitude
from hbt import build_histogram, fit_envelope, normalize_g2, write_fit_report
from run_config import RunConfig
from sim_config import PS, NormalizationMode, StreamFormat

from .common import CommandContext, execute, resolve_config

logger = logging.getLogger(__name__)


def calibrated_pulse(config: RunConfig):
    """Pulse shape whose peak intracavity ⟨n⟩ hits pulse.target_n at the calibration detuning."""
    params = config.system_params()
    shape = config.pulse_shape()
    amplitude = calibrate_pulse_amplitude(params, shape, config.pulse.target_n,
                                          config.to_rad(config.pulse.calibration_detuning))
    logger.info(f"Pulse amplitude calibrated to {amplitude:.4e} rad/s")
    return shape.with_peak(amplitude)


def _hbt_body(context: CommandContext) -> None:
    config = context.config
    hbt = config.hbt
    params = config.system_params()
    detuning = config.to_rad(config.sweep.detuning)
    pulse = calibrated_pulse(config)
    telegraph = config.telegraph()
    background = config.background_model(detuning)
    detector = config.detector_model()

    bright_pool, dark_pool = emission_pools(params, pulse, detuning, telegraph, hbt.pool_size,
                                            config.seed, config.workers)
    stream = synthesize_click_stream(
        params, pulse, detuning, telegraph, background, hbt.pulses, config.seed,
        detector=detector, block_size=hbt.block_size, workers=config.workers,
        bright_pool=bright_pool, dark_pool=dark_pool,
    )
    if hbt.write_stream:
        suffix = "csv" if hbt.stream_format == StreamFormat.CSV else "bin"
        write_click_stream(stream, context.session.path(f"clicks.{suffix}"), hbt.stream_format)

    period = detector.period
    histogram = build_histogram(stream, hbt.bin_width_ps * PS, (hbt.m_max + 0.5) * period,
                                period=period, workers=config.workers)
    fit = fit_envelope(histogram, (1, hbt.m_max))
    normalized = [normalize_g2(histogram, fit, mode) for mode in NormalizationMode.ALL]
    prediction = model_prediction(params, pulse, detuning, telegraph, background, detector,
                                  hbt.m_max, config.pulse.estimator)
    # expectation for this stream: the pools it drew from, not the master equation
    expected_peaks = pool_prediction(bright_pool, dark_pool, telegraph, stream.metadata["background_per_pulse"],
                                     detector, hbt.m_max)

    extra_header = {"detuning_over_g": config.sweep.detuning, "n_pulses": hbt.pulses}
    context.session.csv(
        "histogram.csv",
        ["delay_s", "coincidences"],
        histogram.to_rows(),
        dict(extra_header, units="delay in seconds; counts per bin", bin_width_ps=hbt.bin_width_ps),
    )
    m = np.arange(hbt.m_max + 1)
    expected = expected_peaks.areas * np.maximum(hbt.pulses - m, 0)
    context.session.csv(
        "peaks.csv",
        ["m", "delay_s", "measured_area", "predicted_area"],
        zip(m, m * period, histogram.peak_areas(hbt.m_max), expected),
        dict(extra_header, units="peak areas in coincidences"),
    )

    metadata = stream.metadata
    write_fit_report(context.session.path("fit.txt"), fit, normalized, {
        "detuning_over_g": float(config.sweep.detuning),
        "n_pulses": hbt.pulses,
        "n_clicks": stream.n_clicks,
        "bright_fraction_realized": metadata["bright_fraction_realized"],
        "background_per_pulse": metadata["background_per_pulse"],
        "predicted_g2_plateau": prediction.g2_plateau,
        "predicted_g2_nearest_neighbor": prediction.g2_nearest,
        "expected_g2_plateau": expected_peaks.g2_plateau,
        "expected_g2_nearest_neighbor": expected_peaks.g2_nearest,
        "config_hash": config.config_hash(),
        "seed": config.seed,
    })

    for item in normalized:
        context.summary[f"g2_{item.mode}"] = item.value
        context.summary[f"g2_{item.mode}_err"] = item.error
    context.summary["predicted_g2_plateau"] = prediction.g2_plateau
    logger.info(f"HBT at detuning {config.sweep.detuning:g} g: "
                + ", ".join(f"{item.mode}={item.value:.4f}±{item.error:.4f}" for item in normalized))


def cmd_hbt(config: RunConfig, preset: Optional[str] = None,
            directory: Optional[Path] = None) -> CommandContext:
    """Write histogram.csv, peaks.csv and fit.txt (and optionally the click stream)."""
    return execute("hbt", config, _hbt_body, preset=preset, directory=directory)


def register(subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser) -> None:
    hbt = subparsers.add_parser("hbt", parents=[parent], help="Synthetic HBT measurement at one detuning")
    hbt.add_argument("--write-stream", action="store_true", help="Also write the click stream")
    hbt.add_argument("--stream-format", choices=StreamFormat.ALL, help="Click stream file layout")

    def handle(args: argparse.Namespace) -> CommandContext:
        config = resolve_config(args).with_overrides({
            "hbt.write_stream": True if args.write_stream else None,
            "hbt.stream_format": args.stream_format,
        })
        return cmd_hbt(config)

    hbt.set_defaults(handler=handle)
