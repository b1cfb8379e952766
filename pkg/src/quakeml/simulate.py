"""
Monte Carlo generation of true and false detections, calibration of the
null variance delta, and assessment of classification and location errors.

Every replication draws from its own generator keyed by (seed, arm, index),
so results do not depend on the order replications are run in.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from contextlib import ExitStack
from dataclasses import dataclass
from enum import Enum
from functools import partial
from pathlib import Path
from typing import Literal, Protocol

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from quakeml.detector import Detection, DetectorConfig, Smartphone, detect
from quakeml.errors import InsufficientDataError, InvalidInputError, NonConvergenceError
from quakeml.estimation import (
    MIN_TRIGGERS,
    EstimatorConfig,
    FitResult,
    Hypocenter,
    Trigger,
    estimate_hypocenter,
)
from quakeml.geo import (
    DEFAULT_EARTH,
    EarthModel,
    GeoPoint,
    WaveSpeed,
    chord_hypocentral_distance,
    haversine_km,
)
from quakeml.hypothesis import (
    TestSpec,
    Verdict,
    chi_square_quantile,
    classify_fits,
    evaluate_fit,
)
from quakeml.networks import CsvRosterNetwork, NetworkSource, UniformBoxNetwork

logger = structlog.get_logger()

MIN_CALIBRATION_SAMPLES = 100
_PROGRESS_EVERY = 100

# Lima smartphone network box
LIMA_LAT = (-12.39, -11.74)
LIMA_LON = (-77.17, -76.66)


def _fresh_seed() -> int:
    return int(np.random.SeedSequence().entropy % 2**32)


def _check_window(window: tuple[float, float]) -> None:
    if window[0] > window[1]:
        raise ValueError(f"window not ordered: {window}")


class NetworkSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    count: int = Field(1000, ge=1)
    lat_min: float = Field(LIMA_LAT[0], ge=-90.0, le=90.0)
    lat_max: float = Field(LIMA_LAT[1], ge=-90.0, le=90.0)
    lon_min: float = Field(LIMA_LON[0], ge=-180.0, le=180.0)
    lon_max: float = Field(LIMA_LON[1], ge=-180.0, le=180.0)
    placement: Literal["uniform", "file"] = "uniform"
    path: Path | None = None

    @model_validator(mode="after")
    def _check(self) -> NetworkSpec:
        if self.lat_min > self.lat_max or self.lon_min > self.lon_max:
            raise ValueError("network box not ordered")
        if self.placement == "file" and self.path is None:
            raise ValueError("placement 'file' needs a roster path")
        return self

    def source(self) -> NetworkSource:
        if self.placement == "file":
            assert self.path is not None
            return CsvRosterNetwork(self.path)
        return UniformBoxNetwork(
            self.count, (self.lat_min, self.lat_max), (self.lon_min, self.lon_max)
        )


class TrueEventSpec(BaseModel):
    """Earthquake scenario: epicentre box, depth range and phone behaviour."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lat_min: float = LIMA_LAT[0]
    lat_max: float = LIMA_LAT[1]
    lon_min: float = LIMA_LON[0]
    lon_max: float = LIMA_LON[1]
    depth_min_km: float = Field(0.0, ge=0.0)
    depth_max_km: float = Field(100.0, ge=0.0)
    wave_speed_kms: float = Field(7.8, gt=0.0)
    t_origin: float = 0.0
    p_triggering: float = Field(0.70, ge=0.0, le=1.0)
    noise_variance: float = Field(1.67, ge=0.0)
    p_spurious: float = Field(0.06, ge=0.0, le=1.0)
    spurious_window: tuple[float, float] = (0.0, 12.0)

    @model_validator(mode="after")
    def _check(self) -> TrueEventSpec:
        if self.lat_min > self.lat_max or self.lon_min > self.lon_max:
            raise ValueError("epicentre box not ordered")
        if self.depth_min_km > self.depth_max_km:
            raise ValueError("depth range not ordered")
        _check_window(self.spurious_window)
        return self


class FalseEventSpec(BaseModel):
    """Phones triggering at random, with no wave propagation behind them."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    p_triggering: float = Field(0.30, ge=0.0, le=1.0)
    window: tuple[float, float] = (0.0, 12.0)

    @model_validator(mode="after")
    def _check(self) -> FalseEventSpec:
        _check_window(self.window)
        return self


class Arm(str, Enum):
    NETWORK = "network"
    TRUE = "true"
    FALSE = "false"


_ARM_KEYS = {Arm.NETWORK: 0, Arm.TRUE: 1, Arm.FALSE: 2}


def replication_rng(seed: int, arm: Arm, index: int) -> np.random.Generator:
    """Generator keyed by (seed, arm, replication index)."""
    return np.random.default_rng(np.random.SeedSequence([seed, _ARM_KEYS[arm], index]))


def estimator_seed(seed: int, arm: Arm, index: int) -> int:
    """Seed for the multi-start draws of one replication's fits."""
    state = np.random.SeedSequence([seed, _ARM_KEYS[arm], index, 1]).generate_state(1)
    return int(state[0])


def generate_network(spec: NetworkSpec, rng: np.random.Generator) -> list[Smartphone]:
    """Place (or load) the smartphones of the simulated network."""
    source = spec.source()
    phones = source.load(rng)
    logger.info("Network ready", source=str(source), count=len(phones))
    return phones


def _phone_arrays(network: Sequence[Smartphone]) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.array([p.location.lat for p in network]),
        np.array([p.location.lon for p in network]),
    )


def _sorted_stream(triggers: list[Trigger]) -> list[Trigger]:
    return sorted(triggers, key=lambda t: (t.time, t.id or ""))


def _triggers(
    network: Sequence[Smartphone], indices: np.ndarray, times: np.ndarray
) -> list[Trigger]:
    return [
        Trigger(network[i].location, float(t), network[i].id)
        for i, t in zip(indices, times)
    ]


def simulate_true_stream(
    network: Sequence[Smartphone],
    ev: TrueEventSpec,
    rng: np.random.Generator,
    earth: EarthModel = DEFAULT_EARTH,
) -> tuple[list[Trigger], Hypocenter]:
    """
    Draw an earthquake and the full, time-sorted trigger list it produces.

    A fraction ``p_triggering`` of the phones triggers at the wave arrival
    time plus Gaussian noise; a fraction ``p_spurious`` of the remaining
    phones triggers at uniformly random times.
    """
    truth = Hypocenter.at(
        float(rng.uniform(ev.lat_min, ev.lat_max)),
        float(rng.uniform(ev.lon_min, ev.lon_max)),
        float(rng.uniform(ev.depth_min_km, ev.depth_max_km)),
        ev.t_origin,
    )
    order = rng.permutation(len(network))
    n_quake = round(ev.p_triggering * len(network))
    quake, rest = order[:n_quake], order[n_quake:]
    spurious = rest[: round(ev.p_spurious * rest.size)]

    lat, lon = _phone_arrays(network)
    epi = haversine_km(
        truth.epicentre.lat, truth.epicentre.lon, lat[quake], lon[quake], earth.radius_km
    )
    arrival = chord_hypocentral_distance(epi, truth.depth_km, earth.radius_km) / ev.wave_speed_kms
    noise = rng.normal(0.0, math.sqrt(ev.noise_variance), quake.size)
    random_times = rng.uniform(*ev.spurious_window, size=spurious.size)

    stream = _triggers(network, quake, arrival + ev.t_origin + noise)
    stream += _triggers(network, spurious, random_times)
    return _sorted_stream(stream), truth


def simulate_true_detection(
    network: Sequence[Smartphone],
    ev: TrueEventSpec,
    det: DetectorConfig,
    rng: np.random.Generator,
    earth: EarthModel = DEFAULT_EARTH,
) -> tuple[Detection, Hypocenter] | None:
    """Simulate an earthquake and run the detector; None if it never fires."""
    stream, truth = simulate_true_stream(network, ev, rng, earth)
    detection = detect(stream, network, det, earth)
    return None if detection is None else (detection, truth)


def simulate_false_stream(
    network: Sequence[Smartphone], ev: FalseEventSpec, rng: np.random.Generator
) -> list[Trigger]:
    """Random triggers of a fraction ``p_triggering`` of the phones."""
    chosen = rng.permutation(len(network))[: round(ev.p_triggering * len(network))]
    times = rng.uniform(*ev.window, size=chosen.size)
    return _sorted_stream(_triggers(network, chosen, times))


def simulate_false_detection(
    network: Sequence[Smartphone],
    ev: FalseEventSpec,
    det: DetectorConfig,
    rng: np.random.Generator,
    earth: EarthModel = DEFAULT_EARTH,
) -> Detection | None:
    return detect(simulate_false_stream(network, ev, rng), network, det, earth)


class VarianceSample(Protocol):
    @property
    def sigma2(self) -> float: ...

    @property
    def n(self) -> int: ...


def calibrate_delta(
    samples: Sequence[VarianceSample],
    alpha: float,
    floor: float = 1e-6,
    rel_tol: float = 1e-4,
) -> float:
    """
    Smallest delta whose empirical type I error on true detections is <= alpha.

    Bisection on the rejection rate, which is non-increasing in delta.

    Args:
        samples: Fits (or anything with ``sigma2`` and ``n``) of true detections.
        alpha: Target type I error.
        floor: Returned, with a warning, when even it keeps the rate <= alpha.
        rel_tol: Relative width of the final bracket.

    Raises:
        InsufficientDataError: Fewer than 100 samples.
    """
    if len(samples) < MIN_CALIBRATION_SAMPLES:
        raise InsufficientDataError(
            len(samples), MIN_CALIBRATION_SAMPLES, "simulated true detections"
        )
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha {alpha} outside (0, 1)")
    sigma2 = np.array([s.sigma2 for s in samples], dtype=float)
    n = np.array([s.n for s in samples], dtype=int)
    if np.any(n < MIN_TRIGGERS):
        raise InvalidInputError("every sample needs n >= 4")
    df = n - 3
    critical = np.array([chi_square_quantile(1.0 - alpha, int(k)) for k in df])

    def rejection_rate(delta: float) -> float:
        return float(np.mean(df * sigma2 / delta > critical))

    if rejection_rate(floor) <= alpha:
        logger.warning("Calibrated delta at floor", floor=floor, samples=len(samples))
        return floor

    lo, hi = floor, 2.0 * float(np.max(df * sigma2 / critical))
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if rejection_rate(mid) <= alpha:
            hi = mid
        else:
            lo = mid
    return hi


class ErrorSummary(BaseModel):
    count: int
    median: float | None
    q1: float | None
    q3: float | None
    min: float | None
    max: float | None
    mean: float | None

    @classmethod
    def of(cls, values: Sequence[float]) -> ErrorSummary:
        if not values:
            return cls(count=0, median=None, q1=None, q3=None, min=None, max=None, mean=None)
        arr = np.asarray(values, dtype=float)
        q1, median, q3 = np.percentile(arr, [25, 50, 75])
        return cls(
            count=arr.size,
            median=float(median),
            q1=float(q1),
            q3=float(q3),
            min=float(arr.min()),
            max=float(arr.max()),
            mean=float(arr.mean()),
        )


@dataclass(frozen=True)
class ReplicationOutcome:
    arm: Arm
    index: int
    detection: Detection | None
    truth: Hypocenter | None
    fits: tuple[FitResult, ...] = ()
    nonconverged: int = 0

    @property
    def detected(self) -> bool:
        return self.detection is not None

    @property
    def primary_fit(self) -> FitResult:
        return self.fits[0]

    def verdict(self, spec: TestSpec) -> Verdict:
        return classify_fits(self.fits[0], self.fits[1], spec).verdict


class ErrorAssessment(BaseModel):
    epicentre_km: ErrorSummary
    depth_km: ErrorSummary
    epicentre_errors: list[float]
    depth_errors: list[float]


def assess_errors(outcomes: Sequence[ReplicationOutcome]) -> ErrorAssessment:
    """
    Epicentre (great-circle) and depth (absolute) errors of the primary-speed
    fits of detected true events.
    """
    usable = [o for o in outcomes if o.detected and o.truth is not None and o.fits]
    if len(usable) < MIN_CALIBRATION_SAMPLES:
        logger.warning("Few simulations for error assessment", n=len(usable))
    epicentre = []
    depth = []
    for o in usable:
        assert o.truth is not None
        estimate = o.primary_fit.hypocenter
        epicentre.append(
            float(
                haversine_km(
                    o.truth.epicentre.lat,
                    o.truth.epicentre.lon,
                    estimate.epicentre.lat,
                    estimate.epicentre.lon,
                )
            )
        )
        depth.append(abs(o.truth.depth_km - estimate.depth_km))
    return ErrorAssessment(
        epicentre_km=ErrorSummary.of(epicentre),
        depth_km=ErrorSummary.of(depth),
        epicentre_errors=epicentre,
        depth_errors=depth,
    )


class CalibrationStudy(BaseModel):
    """Everything that defines a calibration run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    network: NetworkSpec = NetworkSpec()
    true_event: TrueEventSpec = TrueEventSpec()
    false_event: FalseEventSpec = FalseEventSpec()
    detector: DetectorConfig = DetectorConfig()
    estimator: EstimatorConfig = EstimatorConfig()
    primary_speed_kms: float = Field(7.8, gt=0.0)
    secondary_speed_kms: float = Field(4.5, gt=0.0)
    alpha: float = Field(0.01, gt=0.0, lt=1.0)
    replications: int = Field(1000, ge=1)
    seed: int = Field(default_factory=_fresh_seed, ge=0)
    delta_floor: float = Field(1e-6, gt=0.0)
    histogram_bins: int = Field(50, ge=1)

    @property
    def waves(self) -> tuple[WaveSpeed, WaveSpeed]:
        return (
            WaveSpeed.primary(self.primary_speed_kms),
            WaveSpeed.secondary(self.secondary_speed_kms),
        )


def simulate_stream(
    arm: Arm, index: int, network: Sequence[Smartphone], study: CalibrationStudy
) -> tuple[list[Trigger], Hypocenter | None]:
    """The full trigger stream (and truth, for true events) of one replication."""
    rng = replication_rng(study.seed, arm, index)
    if arm is Arm.TRUE:
        return simulate_true_stream(network, study.true_event, rng)
    if arm is Arm.FALSE:
        return simulate_false_stream(network, study.false_event, rng), None
    raise InvalidInputError(f"no replications for arm {arm.value}")


def fit_detection(
    detection: Detection,
    waves: Sequence[WaveSpeed],
    cfg: EstimatorConfig,
) -> tuple[tuple[FitResult, ...], int]:
    """
    Fit a detection at each speed, keeping best-effort fits that did not
    converge. Calibration only needs sigma2 and the hypocenter, so no
    confidence intervals are computed.
    """
    fits = []
    nonconverged = 0
    for wave in waves:
        try:
            fits.append(
                estimate_hypocenter(detection.triggers, wave, cfg, intervals=False)
            )
        except NonConvergenceError as e:
            fits.append(e.best)
            nonconverged += 1
    return tuple(fits), nonconverged


def run_replication(
    arm: Arm, index: int, network: Sequence[Smartphone], study: CalibrationStudy
) -> ReplicationOutcome:
    stream, truth = simulate_stream(arm, index, network, study)
    detection = detect(stream, network, study.detector)
    if detection is None:
        return ReplicationOutcome(arm, index, None, truth)
    cfg = study.estimator.model_copy(update={"seed": estimator_seed(study.seed, arm, index)})
    fits, nonconverged = fit_detection(detection, study.waves, cfg)
    return ReplicationOutcome(arm, index, detection, truth, fits, nonconverged)


def run_arm(
    arm: Arm,
    network: Sequence[Smartphone],
    study: CalibrationStudy,
    workers: int = 1,
) -> list[ReplicationOutcome]:
    """
    All replications of one arm, in index order.

    With ``workers > 1`` replications run in a process pool; each one draws
    from its own keyed generator, so the outcomes do not depend on ``workers``.
    """
    task = partial(run_replication, arm, network=network, study=study)
    indices = range(study.replications)
    outcomes: list[ReplicationOutcome] = []
    with ExitStack() as stack:
        if workers > 1:
            pool = stack.enter_context(ProcessPoolExecutor(max_workers=workers))
            chunksize = max(1, study.replications // (4 * workers))
            results = pool.map(task, indices, chunksize=chunksize)
        else:
            results = map(task, indices)
        for outcome in results:
            outcomes.append(outcome)
            if len(outcomes) % _PROGRESS_EVERY == 0:
                logger.info(
                    "Simulation progress",
                    arm=arm.value,
                    done=len(outcomes),
                    total=study.replications,
                    detected=sum(o.detected for o in outcomes),
                )
    return outcomes


class HistogramData(BaseModel):
    """Shared-bin histograms of sigma2_hat for true and false detections."""

    bin_edges: list[float]
    true_counts: list[int]
    false_counts: list[int]
    true_values: list[float]
    false_values: list[float]

    @classmethod
    def of(cls, true_values: list[float], false_values: list[float], bins: int) -> HistogramData:
        combined = np.asarray(true_values + false_values, dtype=float)
        if combined.size == 0:
            return cls(bin_edges=[], true_counts=[], false_counts=[], true_values=[], false_values=[])
        edges = np.histogram_bin_edges(combined, bins=bins)
        return cls(
            bin_edges=[float(e) for e in edges],
            true_counts=[int(c) for c in np.histogram(true_values, bins=edges)[0]],
            false_counts=[int(c) for c in np.histogram(false_values, bins=edges)[0]],
            true_values=true_values,
            false_values=false_values,
        )


class CalibrationReport(BaseModel):
    """Outcome of a calibration study; bit-identical for identical studies."""

    delta: float
    alpha: float
    type1: float
    type2: float | None
    rejection_rates: dict[str, dict[str, float | None]]
    replications: int
    seed: int
    true_detections: int
    false_detections: int
    true_nondetections: int
    false_nondetections: int
    nonconverged_fits: int
    depth_bound_fits: int
    epicentre_errors_km: ErrorSummary
    depth_errors_km: ErrorSummary
    sigma2_histogram: HistogramData
    error_boxplot: ErrorAssessment
    config: CalibrationStudy


def _rate(flags: Sequence[bool]) -> float | None:
    return float(np.mean(flags)) if flags else None


def run_calibration(study: CalibrationStudy, workers: int = 1) -> CalibrationReport:
    """
    Simulate both arms, calibrate delta on the true arm, then measure type I
    (true events classified false) and type II (false detections classified
    true) errors with the two-velocity rule.

    ``workers`` sets the number of processes; the report does not depend on it.
    """
    if workers < 1:
        raise InvalidInputError(f"workers must be >= 1, got {workers}")
    network = generate_network(study.network, replication_rng(study.seed, Arm.NETWORK, 0))
    logger.info("Calibration started", replications=study.replications, seed=study.seed)
    true_outcomes = run_arm(Arm.TRUE, network, study, workers)
    false_outcomes = run_arm(Arm.FALSE, network, study, workers)

    true_detected = [o for o in true_outcomes if o.detected]
    false_detected = [o for o in false_outcomes if o.detected]
    delta = calibrate_delta(
        [o.primary_fit for o in true_detected], study.alpha, floor=study.delta_floor
    )
    spec = TestSpec(delta=delta, alpha=study.alpha)

    rates: dict[str, dict[str, float | None]] = {}
    for name, outcomes in (("true", true_detected), ("false", false_detected)):
        tests = [[evaluate_fit(fit, spec).rejected for fit in o.fits] for o in outcomes]
        rates[name] = {
            wave.label.value: _rate([t[k] for t in tests]) for k, wave in enumerate(study.waves)
        }

    type1 = _rate([o.verdict(spec) is Verdict.FALSE_DETECTION for o in true_detected])
    type2 = _rate([o.verdict(spec) is Verdict.TRUE_EARTHQUAKE for o in false_detected])
    errors = assess_errors(true_detected)
    report = CalibrationReport(
        delta=delta,
        alpha=study.alpha,
        type1=type1 or 0.0,
        type2=type2,
        rejection_rates=rates,
        replications=study.replications,
        seed=study.seed,
        true_detections=len(true_detected),
        false_detections=len(false_detected),
        true_nondetections=len(true_outcomes) - len(true_detected),
        false_nondetections=len(false_outcomes) - len(false_detected),
        nonconverged_fits=sum(o.nonconverged for o in true_outcomes + false_outcomes),
        depth_bound_fits=sum(o.primary_fit.at_depth_bound for o in true_detected),
        epicentre_errors_km=errors.epicentre_km,
        depth_errors_km=errors.depth_km,
        sigma2_histogram=HistogramData.of(
            [o.primary_fit.sigma2 for o in true_detected],
            [o.primary_fit.sigma2 for o in false_detected],
            study.histogram_bins,
        ),
        error_boxplot=errors,
        config=study,
    )
    logger.info(
        "Calibration finished",
        delta=round(delta, 4),
        type1=report.type1,
        type2=report.type2,
        median_epicentre_km=errors.epicentre_km.median,
        median_depth_km=errors.depth_km.median,
        depth_bound_fits=report.depth_bound_fits,
    )
    return report


class PhonePlotPoint(BaseModel):
    id: str
    lat: float
    lon: float
    triggered: bool
    t: float | None
    concurring: bool


class PlotData(BaseModel):
    """Data behind a network map: phones, trigger times, epicentre, detection."""

    replication: int
    phones: list[PhonePlotPoint]
    epicentre: GeoPointModel | None
    depth_km: float | None
    detection_center: GeoPointModel | None
    detection_time: float | None


class GeoPointModel(BaseModel):
    lat: float
    lon: float

    @classmethod
    def of(cls, point: GeoPoint) -> GeoPointModel:
        return cls(lat=point.lat, lon=point.lon)


PlotData.model_rebuild()


def plot_data(
    replication: int,
    network: Sequence[Smartphone],
    stream: Sequence[Trigger],
    detection: Detection | None,
    truth: Hypocenter | None,
) -> PlotData:
    """Everything needed to redraw a simulated event map."""
    times = {t.id: t.time for t in stream}
    concurring = {t.id for t in detection.triggers} if detection else set()
    return PlotData(
        replication=replication,
        phones=[
            PhonePlotPoint(
                id=p.id,
                lat=p.location.lat,
                lon=p.location.lon,
                triggered=p.id in times,
                t=times.get(p.id),
                concurring=p.id in concurring,
            )
            for p in network
        ],
        epicentre=GeoPointModel.of(truth.epicentre) if truth else None,
        depth_km=truth.depth_km if truth else None,
        detection_center=GeoPointModel.of(detection.center) if detection else None,
        detection_time=detection.detection_time if detection else None,
    )
