"""
QuakeML Command Line Interface.

Classify smartphone-network detections, fit hypocenters, replay the
detector, simulate events and calibrate the null variance.

Exit codes: 0 true earthquake (or success), 2 usage or input error,
3 false detection, 4 unclassifiable, 5 no detection.
"""

from __future__ import annotations

import io
import logging
import sys
import time
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any, NoReturn, TypeVar

import click
import numpy as np
import structlog
from click.core import ParameterSource
from pydantic import ValidationError

from quakeml import __version__
from quakeml.config import default_map, load_config
from quakeml.detector import DetectorConfig, detect
from quakeml.errors import (
    InsufficientDataError,
    InvalidInputError,
    NonConvergenceError,
    QuakeMLError,
    TriggerFileError,
)
from quakeml.estimation import (
    MIN_TRIGGERS,
    EstimatorConfig,
    FitResult,
    Hypocenter,
    Trigger,
    estimate_hypocenter,
)
from quakeml.geo import WaveSpeed
from quakeml.hypothesis import TestSpec, Verdict, classify_fits
from quakeml.io import read_roster, read_triggers, write_hypocenters, write_roster, write_triggers
from quakeml.reports import ClassificationReport, EstimateReport
from quakeml.simulate import (
    MIN_CALIBRATION_SAMPLES,
    Arm,
    CalibrationStudy,
    FalseEventSpec,
    NetworkSpec,
    TrueEventSpec,
    generate_network,
    plot_data,
    replication_rng,
    run_calibration,
    simulate_stream,
)

logger = structlog.get_logger()

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FALSE = 3
EXIT_UNCLASSIFIABLE = 4
EXIT_NO_DETECTION = 5

LOG_LEVELS = ("debug", "info", "warning", "error")
LOG_FORMATS = ("console", "json")

F = TypeVar("F", bound=Callable[..., Any])


def _stderr_logger(*args: Any) -> structlog.PrintLogger:
    return structlog.PrintLogger(file=sys.stderr)


def configure_logging(level: str = "warning", fmt: str = "console") -> None:
    """Send structured logs to standard error; standard output carries results."""
    renderer: Any = (
        structlog.processors.JSONRenderer()
        if fmt == "json"
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(getattr(logging, level.upper())),
        context_class=dict,
        logger_factory=_stderr_logger,
        cache_logger_on_first_use=False,
    )


def _fail(message: str, code: int, details: list[str] | None = None) -> NoReturn:
    click.echo(click.style(f"❌ {message}", fg="red"), err=True)
    for line in details or []:
        click.echo(f"   {line}", err=True)
    sys.exit(code)


@contextmanager
def _handle_errors() -> Iterator[None]:
    """Map library errors onto the exit-code contract."""
    try:
        yield
    except TriggerFileError as e:
        _fail(f"cannot parse {e.path}", EXIT_USAGE, e.diagnostics)
    except InsufficientDataError as e:
        _fail(str(e), EXIT_UNCLASSIFIABLE)
    except (InvalidInputError, ValidationError) as e:
        _fail(str(e), EXIT_USAGE)
    except QuakeMLError as e:
        _fail(str(e), 1)


def _emit(text: str, output: Path | None) -> None:
    if output is None:
        click.echo(text)
        return
    try:
        output.write_text(text + "\n", encoding="utf-8")
    except OSError as e:
        _fail(f"cannot write {output}: {e}", EXIT_USAGE)


def _resolve_seed(seed: int | None) -> int:
    return seed if seed is not None else int(np.random.SeedSequence().entropy % 2**32)


def _elapsed_ms(start: float) -> float:
    return round((time.perf_counter() - start) * 1000.0, 3)


def _apply(f: F, decorators: list[Callable[[F], F]]) -> F:
    for decorator in reversed(decorators):
        f = decorator(f)
    return f


def seed_option(f: F) -> F:
    return click.option(
        "--seed",
        type=int,
        envvar="QUAKEML_SEED",
        default=None,
        help="Random seed (default: $QUAKEML_SEED, else fresh entropy)",
    )(f)


def output_option(f: F) -> F:
    return click.option(
        "--output",
        "-o",
        type=click.Path(dir_okay=False, path_type=Path),
        default=None,
        help="Write to this file instead of standard output",
    )(f)


def estimator_options(f: F) -> F:
    return _apply(
        f,
        [
            click.option("--restarts", type=int, default=20, show_default=True, help="Random starts per fit"),
            click.option("--depth-min", type=float, default=0.0, show_default=True, help="Depth lower bound, km"),
            click.option("--depth-max", type=float, default=100.0, show_default=True, help="Depth upper bound, km"),
            click.option("--box-margin", type=float, default=1.0, show_default=True, help="Search box margin, degrees"),
            click.option("--tolerance", type=float, default=1e-8, show_default=True, help="Objective tolerance, s^2"),
            click.option("--max-iterations", type=int, default=500, show_default=True, help="Iterations per restart"),
            click.option("--confidence-level", type=float, default=0.99, show_default=True),
        ],
    )


def velocity_options(f: F) -> F:
    return _apply(
        f,
        [
            click.option("--vp", type=float, default=7.8, show_default=True, help="Primary wave speed, km/s"),
            click.option("--vs", type=float, default=4.5, show_default=True, help="Secondary wave speed, km/s"),
        ],
    )


def detector_options(f: F) -> F:
    return _apply(
        f,
        [
            click.option("--radius", type=float, default=30.0, show_default=True, help="Candidate area radius, km"),
            click.option("--window", type=float, default=10.0, show_default=True, help="Sliding window, s"),
            click.option("--ratio", type=float, default=0.25, show_default=True, help="Triggering/active ratio threshold"),
            click.option("--min-triggers", type=int, default=4, show_default=True),
        ],
    )


def scenario_options(f: F) -> F:
    return _apply(
        f,
        [
            click.option("--phones", type=int, default=1000, show_default=True, help="Phones in the uniform network"),
            click.option(
                "--roster",
                type=click.Path(exists=True, dir_okay=False, path_type=Path),
                default=None,
                help="Use this roster instead of uniform placement",
            ),
            click.option("--p-triggering", type=float, default=0.70, show_default=True, help="True events: fraction of phones reached"),
            click.option("--noise-variance", type=float, default=1.67, show_default=True, help="True events: trigger time noise, s^2"),
            click.option("--p-spurious", type=float, default=0.06, show_default=True, help="True events: spurious fraction of the rest"),
            click.option("--wave-speed", type=float, default=7.8, show_default=True, help="True events: generating speed, km/s"),
            click.option("--false-p-triggering", type=float, default=0.30, show_default=True, help="False detections: fraction triggering"),
            click.option("--trigger-window", type=float, default=12.0, show_default=True, help="Random trigger times in [0, this], s"),
        ],
    )


def _estimator_config(opts: dict[str, Any], seed: int | None) -> EstimatorConfig:
    return EstimatorConfig(
        restarts=opts["restarts"],
        depth_min_km=opts["depth_min"],
        depth_max_km=opts["depth_max"],
        box_margin_deg=opts["box_margin"],
        tolerance=opts["tolerance"],
        max_iterations=opts["max_iterations"],
        confidence_level=opts["confidence_level"],
        seed=seed,
    )


def _detector_config(opts: dict[str, Any]) -> DetectorConfig:
    return DetectorConfig(
        radius_km=opts["radius"],
        window_s=opts["window"],
        ratio_threshold=opts["ratio"],
        min_triggers=opts["min_triggers"],
    )


def _study(opts: dict[str, Any], replications: int, alpha: float, seed: int) -> CalibrationStudy:
    roster = opts["roster"]
    window = (0.0, opts["trigger_window"])
    return CalibrationStudy(
        network=NetworkSpec(
            count=opts["phones"],
            placement="file" if roster else "uniform",
            path=roster,
        ),
        true_event=TrueEventSpec(
            p_triggering=opts["p_triggering"],
            noise_variance=opts["noise_variance"],
            p_spurious=opts["p_spurious"],
            wave_speed_kms=opts["wave_speed"],
            depth_min_km=opts["depth_min"],
            depth_max_km=opts["depth_max"],
            spurious_window=window,
        ),
        false_event=FalseEventSpec(p_triggering=opts["false_p_triggering"], window=window),
        detector=_detector_config(opts),
        estimator=_estimator_config(opts, None),
        primary_speed_kms=opts["vp"],
        secondary_speed_kms=opts["vs"],
        alpha=alpha,
        replications=replications,
        seed=seed,
    )


def _parse_truth(ctx: click.Context, param: click.Parameter, value: str | None) -> Hypocenter | None:
    if value is None:
        return None
    try:
        lat, lon, depth = (float(x) for x in value.split(","))
        return Hypocenter.at(lat, lon, depth)
    except (ValueError, InvalidInputError):
        raise click.BadParameter("expected LAT,LON,DEPTH_KM, e.g. 44.46,9.06,8") from None


def _fit(triggers: list[Trigger], wave: WaveSpeed, cfg: EstimatorConfig) -> FitResult:
    try:
        return estimate_hypocenter(triggers, wave, cfg)
    except NonConvergenceError as e:
        logger.warning("Using best-effort fit", wave=str(wave), restarts=e.restarts)
        return e.best


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(version=__version__, prog_name="quakeml")
@click.option(
    "--config",
    "-c",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="YAML file with option defaults",
)
@click.option(
    "--log-level",
    type=click.Choice(LOG_LEVELS, case_sensitive=False),
    default="warning",
    show_default=True,
)
@click.option("--log-format", type=click.Choice(LOG_FORMATS), default="console", show_default=True)
@click.pass_context
def cli(ctx: click.Context, config: Path | None, log_level: str, log_format: str) -> None:
    """
    QuakeML - tell true earthquakes from false smartphone detections.

    Trigger files are CSV with header id,lat,lon,t (id optional); times are
    seconds relative to any shared epoch.
    """
    if config is not None:
        try:
            raw = load_config(config)
            ctx.default_map = default_map(raw, cli.commands)
        except InvalidInputError as e:
            raise click.BadParameter(str(e), param_hint="--config") from None
        if ctx.get_parameter_source("log_level") is ParameterSource.DEFAULT:
            log_level = str(raw.get("log_level", log_level)).lower()
        if ctx.get_parameter_source("log_format") is ParameterSource.DEFAULT:
            log_format = str(raw.get("log_format", log_format))
        if log_level not in LOG_LEVELS or log_format not in LOG_FORMATS:
            raise click.BadParameter(f"bad logging settings in {config}", param_hint="--config")
    configure_logging(log_level, log_format)


@cli.command()
@click.argument("triggers", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--delta", type=float, default=0.6, show_default=True, help="Null residual variance, s^2")
@click.option("--alpha", type=float, default=0.01, show_default=True, help="Significance level")
@click.option("--truth", callback=_parse_truth, default=None, help="Real hypocenter LAT,LON,DEPTH_KM")
@velocity_options
@estimator_options
@seed_option
@output_option
def classify(triggers: Path, truth: Hypocenter | None, output: Path | None, **opts: Any) -> None:
    """
    Classify a detection as a true earthquake or a false detection.

    Examples:

        quakeml classify detection.csv

        quakeml classify detection.csv --delta 0.6 --seed 7 -o report.json
    """
    seed = _resolve_seed(opts["seed"])
    with _handle_errors():
        spec = TestSpec(delta=opts["delta"], alpha=opts["alpha"])
        cfg = _estimator_config(opts, seed)
        waves = (WaveSpeed.primary(opts["vp"]), WaveSpeed.secondary(opts["vs"]))
        echo = {
            "delta": spec.delta,
            "alpha": spec.alpha,
            "velocities": [w.v_kms for w in waves],
            "estimator": cfg.model_dump(),
        }
        rows = read_triggers(triggers)

        if len(rows) < MIN_TRIGGERS:
            message = str(InsufficientDataError(len(rows), MIN_TRIGGERS))
            report = ClassificationReport.unclassifiable(rows, message, seed, echo)
            _emit(report.model_dump_json(indent=2, by_alias=True), output)
            _fail(message, EXIT_UNCLASSIFIABLE)

        start = time.perf_counter()
        result = classify_fits(_fit(rows, waves[0], cfg), _fit(rows, waves[1], cfg), spec)
        timing = _elapsed_ms(start)

    logger.info("Detection classified", n=len(rows), verdict=result.verdict.value, timing_ms=timing)
    report = ClassificationReport.of(result, rows, timing, seed, echo, truth)
    _emit(report.model_dump_json(indent=2, by_alias=True), output)
    sys.exit(EXIT_FALSE if result.verdict is Verdict.FALSE_DETECTION else EXIT_OK)


@cli.command()
@click.argument("triggers", type=click.Path(dir_okay=False, path_type=Path))
@click.option(
    "--wave",
    type=click.Choice(["primary", "secondary"]),
    default="primary",
    show_default=True,
)
@click.option("--velocity", type=float, default=None, help="Wave speed, km/s (default: 7.8 or 4.5)")
@estimator_options
@seed_option
@output_option
def estimate(
    triggers: Path, wave: str, velocity: float | None, output: Path | None, **opts: Any
) -> None:
    """
    Fit epicentre, depth and residual variance without testing.

    Example:

        quakeml estimate detection.csv --wave secondary
    """
    seed = _resolve_seed(opts["seed"])
    with _handle_errors():
        cfg = _estimator_config(opts, seed)
        speed = WaveSpeed.primary if wave == "primary" else WaveSpeed.secondary
        v = speed() if velocity is None else speed(velocity)
        rows = read_triggers(triggers)
        start = time.perf_counter()
        fit = _fit(rows, v, cfg)
        timing = _elapsed_ms(start)

    echo = {"velocity": v.v_kms, "wave": v.label.value, "estimator": cfg.model_dump()}
    report = EstimateReport.of(fit, rows, timing, seed, echo)
    _emit(report.model_dump_json(indent=2, by_alias=True), output)


@cli.command("detect")
@click.argument("stream", type=click.Path(dir_okay=False, path_type=Path))
@click.option(
    "--roster",
    type=click.Path(dir_okay=False, path_type=Path),
    required=True,
    help="Smartphone roster CSV (id,lat,lon[,active])",
)
@detector_options
@output_option
def detect_cmd(stream: Path, roster: Path, output: Path | None, **opts: Any) -> None:
    """
    Replay the detector over a time-sorted trigger stream.

    Writes the concurring triggers as a trigger file, ready for classify.

    Example:

        quakeml detect stream.csv --roster network.csv -o detection.csv
    """
    with _handle_errors():
        cfg = _detector_config(opts)
        phones = read_roster(roster)
        rows = read_triggers(stream, allow_empty=True)
        detection = detect(rows, phones, cfg)

    if detection is None:
        _fail("no detection", EXIT_NO_DETECTION)
    logger.info(
        "Detection fired",
        n=detection.triggering_count,
        active=detection.active_count,
        t=detection.detection_time,
    )
    buffer = io.StringIO()
    write_triggers(detection.triggers, buffer)
    _emit(buffer.getvalue().rstrip("\n"), output)


@cli.command()
@click.option("--kind", type=click.Choice(["true", "false"]), default="true", show_default=True)
@click.option("--replications", type=int, default=1, show_default=True)
@click.option(
    "--output-dir",
    "-d",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory for network, trigger, truth and plot files",
)
@scenario_options
@detector_options
@velocity_options
@estimator_options
@seed_option
def simulate(kind: str, replications: int, output_dir: Path, **opts: Any) -> None:
    """
    Simulate true earthquakes or false detections.

    Writes network.csv, triggers_NNNN.csv per replication, truth.csv and
    plot_data.json.

    Example:

        quakeml simulate --kind true --replications 5 --seed 7 -d out/
    """
    seed = _resolve_seed(opts["seed"])
    arm = Arm.TRUE if kind == "true" else Arm.FALSE
    with _handle_errors():
        if replications < 1:
            raise InvalidInputError(f"replications must be >= 1, got {replications}")
        study = _study(opts, replications, 0.01, seed)
        try:
            output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            _fail(f"cannot create {output_dir}: {e}", EXIT_USAGE)

        network = generate_network(study.network, replication_rng(seed, Arm.NETWORK, 0))
        truths = []
        plots = []
        width = max(4, len(str(replications - 1)))
        try:
            write_roster(network, output_dir / "network.csv")
            for index in range(replications):
                stream, truth = simulate_stream(arm, index, network, study)
                write_triggers(stream, output_dir / f"triggers_{index:0{width}d}.csv")
                if truth is not None:
                    truths.append((index, truth))
                detection = detect(stream, network, study.detector)
                plots.append(plot_data(index, network, stream, detection, truth))
            write_hypocenters(truths, output_dir / "truth.csv")
            (output_dir / "plot_data.json").write_text(
                "[\n" + ",\n".join(p.model_dump_json(indent=2) for p in plots) + "\n]\n",
                encoding="utf-8",
            )
        except OSError as e:
            _fail(f"cannot write to {output_dir}: {e}", EXIT_USAGE)

    logger.info("Simulation written", kind=kind, replications=replications, dir=str(output_dir))
    click.echo(f"{replications} {kind} replication(s) written to {output_dir} (seed {seed})", err=True)


@cli.command()
@click.option("--replications", type=int, default=1000, show_default=True, help="Per arm")
@click.option("--alpha", type=float, default=0.01, show_default=True, help="Target type I error")
@scenario_options
@detector_options
@velocity_options
@estimator_options
@seed_option
@output_option
@click.option(
    "--workers",
    type=click.IntRange(min=1),
    default=1,
    show_default=True,
    help="Processes for the replications; results do not depend on it",
)
def calibrate(
    replications: int, alpha: float, workers: int, output: Path | None, **opts: Any
) -> None:
    """
    Calibrate delta by simulation and measure type I/II and location errors.

    Example:

        quakeml calibrate --replications 1000 --seed 7 --workers 4 -o calibration.json
    """
    if replications < MIN_CALIBRATION_SAMPLES:
        _fail(
            f"insufficient replications (n={replications} < {MIN_CALIBRATION_SAMPLES})",
            EXIT_USAGE,
        )
    seed = _resolve_seed(opts["seed"])
    with _handle_errors():
        study = _study(opts, replications, alpha, seed)
        try:
            report = run_calibration(study, workers=workers)
        except InsufficientDataError as e:
            # too few true detections fired to calibrate on
            _fail(str(e), EXIT_USAGE)
    _emit(report.model_dump_json(indent=2), output)


@cli.command()
def version() -> None:
    """Show version information."""
    click.echo(click.style("QuakeML", fg="cyan", bold=True))
    click.echo(f"  Version: {__version__}")
    click.echo(f"  Python: {sys.version.split()[0]}")


def main() -> None:
    """Entry point for the CLI."""
    cli()


if __name__ == "__main__":
    main()
