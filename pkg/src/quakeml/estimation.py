"""
Maximum-likelihood estimation of epicentre, depth and residual variance.

The objective is the centered sum of squared travel-time residuals, which
profiles the origin time out of the likelihood: adding a constant to every
trigger time leaves it unchanged. It is minimized by bounded Nelder-Mead
simplex descent from several random starts.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import optimize, stats

from quakeml.errors import (
    DegenerateGeometryError,
    InsufficientDataError,
    InvalidInputError,
    NonConvergenceError,
)
from quakeml.geo import (
    DEFAULT_EARTH,
    EarthModel,
    FloatArray,
    GeoPoint,
    WaveSpeed,
    chord_hypocentral_distance,
)

logger = structlog.get_logger()

# lat, lon, depth: three estimated parameters, so df = n - 3 >= 1
MIN_TRIGGERS = 4
PARAMETERS = ("lat", "lon", "depth_km")

_SIMPLEX_STEP = np.array([0.1, 0.1, 10.0])
_SIMPLEX_XATOL = 1e-6
_SINGULAR_RTOL = 1e-9


@dataclass(frozen=True, slots=True)
class Trigger:
    """One smartphone trigger: where and when (seconds, any shared epoch)."""

    location: GeoPoint
    time: float
    id: str | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.time):
            raise InvalidInputError(f"non-finite trigger time {self.time}")

    @classmethod
    def at(cls, lat: float, lon: float, time: float, id: str | None = None) -> Trigger:
        return cls(GeoPoint(lat, lon), time, id)


@dataclass(frozen=True, slots=True)
class Hypocenter:
    """
    Earthquake source location.

    ``t_origin`` is a nuisance parameter: it is never estimated and is 0 for
    fitted hypocenters (residuals are measured from the earliest trigger).
    """

    epicentre: GeoPoint
    depth_km: float
    t_origin: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.depth_km) and self.depth_km >= 0):
            raise InvalidInputError(f"depth must be >= 0, got {self.depth_km}")
        if not math.isfinite(self.t_origin):
            raise InvalidInputError("non-finite origin time")

    @classmethod
    def at(cls, lat: float, lon: float, depth_km: float, t_origin: float = 0.0) -> Hypocenter:
        return cls(GeoPoint(lat, lon), depth_km, t_origin)

    def as_theta(self) -> FloatArray:
        return np.array([self.epicentre.lat, self.epicentre.lon, self.depth_km])


@dataclass(frozen=True)
class ResidualSet:
    """Travel-time residuals and their mean."""

    deltas: tuple[float, ...]
    mean: float

    @classmethod
    def from_deltas(cls, deltas: Sequence[float] | FloatArray) -> ResidualSet:
        values = np.asarray(deltas, dtype=float)
        if values.size == 0:
            raise InvalidInputError("empty residual set")
        return cls(tuple(float(x) for x in values), float(values.mean()))

    def centered(self) -> FloatArray:
        return np.asarray(self.deltas) - self.mean

    def __len__(self) -> int:
        return len(self.deltas)


@dataclass(frozen=True, slots=True)
class ConfidenceInterval:
    lower: float
    upper: float

    @classmethod
    def unbounded(cls) -> ConfidenceInterval:
        return cls(-math.inf, math.inf)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class FitResult:
    """Outcome of a multi-start maximum-likelihood fit at one wave speed."""

    hypocenter: Hypocenter
    sigma2: float
    residuals: ResidualSet
    objective: float
    wave: WaveSpeed
    n: int
    converged: bool
    restarts_used: int
    converged_restarts: int
    log_likelihood: float
    conf_intervals: Mapping[str, ConfidenceInterval] = field(default_factory=dict)
    confidence_level: float = 0.99
    degenerate: bool = False
    at_depth_bound: bool = False
    iterations: int = 0


class EstimatorConfig(BaseModel):
    """Multi-start optimizer settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    restarts: int = Field(20, ge=1, description="Random starts per fit")
    depth_min_km: float = Field(0.0, ge=0.0)
    depth_max_km: float = Field(100.0, gt=0.0)
    box_margin_deg: float = Field(
        1.0, ge=0.0, description="Expansion of the trigger bounding box"
    )
    tolerance: float = Field(1e-8, gt=0.0, description="Objective tolerance, s^2")
    max_iterations: int = Field(500, ge=1, description="Per restart")
    seed: int | None = None
    confidence_level: float = Field(0.99, gt=0.0, lt=1.0)
    hessian_step: float = Field(1e-4, gt=0.0)

    @model_validator(mode="after")
    def _check_depth_bounds(self) -> EstimatorConfig:
        if self.depth_min_km >= self.depth_max_km:
            raise ValueError(
                f"depth bounds not ordered: [{self.depth_min_km}, {self.depth_max_km}]"
            )
        return self


def canonical_order(triggers: Sequence[Trigger]) -> list[Trigger]:
    """Sort triggers by (time, lat, lon, id) so results ignore input order."""
    return sorted(
        triggers,
        key=lambda t: (t.time, t.location.lat, t.location.lon, t.id or ""),
    )


class TravelTimeObjective:
    """
    Centered SSE of travel-time residuals as a function of
    theta = (lat, lon, depth_km).

    Trigger times are taken relative to the earliest trigger, so shifting
    every time by a constant leaves the objective unchanged. The invariance
    is bit-exact only when the shifted times need no rounding, as with
    dyadic values such as 0.125 and a shift of 1024. For other shifts the
    additions round and results agree to a few ulps.
    """

    def __init__(
        self,
        triggers: Sequence[Trigger],
        wave: WaveSpeed,
        earth: EarthModel = DEFAULT_EARTH,
    ):
        ordered = canonical_order(triggers)
        self.lat = np.array([t.location.lat for t in ordered])
        self.lon = np.array([t.location.lon for t in ordered])
        times = np.array([t.time for t in ordered])
        self.times = times - times.min()
        # fixed per objective; reused at every evaluation
        self._phi = np.radians(self.lat)
        self._cos_phi = np.cos(self._phi)
        self.wave = wave
        self.radius_km = earth.radius_km
        self.evaluations = 0

    @property
    def n(self) -> int:
        return int(self.times.size)

    def is_coincident(self) -> bool:
        return bool(np.ptp(self.lat) == 0.0 and np.ptp(self.lon) == 0.0)

    def travel_times(self, theta: FloatArray) -> FloatArray:
        epi = self._epicentral_km(theta[0], theta[1])
        return chord_hypocentral_distance(epi, theta[2], self.radius_km) / self.wave.v_kms

    def _epicentral_km(self, lat: float, lon: float) -> FloatArray:
        # haversine_km with the trigger-side terms precomputed
        phi = np.radians(lat)
        dlmb = np.radians(self.lon - lon)
        a = (
            np.sin((self._phi - phi) / 2.0) ** 2
            + np.cos(phi) * self._cos_phi * np.sin(dlmb / 2.0) ** 2
        )
        return 2.0 * self.radius_km * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))

    def residuals(self, theta: FloatArray) -> FloatArray:
        return self.times - self.travel_times(theta)

    def __call__(self, theta: FloatArray) -> float:
        self.evaluations += 1
        r = self.residuals(theta)
        c = r - r.mean()
        return float(c @ c)

    def search_bounds(self, cfg: EstimatorConfig) -> FloatArray:
        margin = cfg.box_margin_deg
        return np.array(
            [
                [max(self.lat.min() - margin, -90.0), min(self.lat.max() + margin, 90.0)],
                [max(self.lon.min() - margin, -180.0), min(self.lon.max() + margin, 180.0)],
                [cfg.depth_min_km, cfg.depth_max_km],
            ]
        )

    def hessian(self, theta: FloatArray, step: float) -> FloatArray:
        """Central finite-difference Hessian (units: s^2 per deg/km squared)."""
        f0 = self(theta)
        e = np.eye(3) * step
        h = np.empty((3, 3))
        for i in range(3):
            h[i, i] = (self(theta + e[i]) - 2.0 * f0 + self(theta - e[i])) / step**2
            for j in range(i + 1, 3):
                h[i, j] = h[j, i] = (
                    self(theta + e[i] + e[j])
                    - self(theta + e[i] - e[j])
                    - self(theta - e[i] + e[j])
                    + self(theta - e[i] - e[j])
                ) / (4.0 * step**2)
        return h


def centered_sse(
    h: Hypocenter,
    triggers: Sequence[Trigger],
    v: WaveSpeed,
    earth: EarthModel = DEFAULT_EARTH,
) -> float:
    """
    Sum of squared residuals about their mean at hypocenter ``h``.

    Raises:
        InvalidInputError: If ``triggers`` is empty.
    """
    if not triggers:
        raise InvalidInputError("empty trigger list")
    return TravelTimeObjective(triggers, v, earth)(h.as_theta())


def residuals_at(
    h: Hypocenter,
    triggers: Sequence[Trigger],
    v: WaveSpeed,
    earth: EarthModel = DEFAULT_EARTH,
) -> ResidualSet:
    """Residuals in canonical trigger order, times from the earliest trigger."""
    if not triggers:
        raise InvalidInputError("empty trigger list")
    objective = TravelTimeObjective(triggers, v, earth)
    return ResidualSet.from_deltas(objective.residuals(h.as_theta()))


def estimate_variance(residuals: ResidualSet, n: int | None = None) -> float:
    """Maximum-likelihood residual variance, dividing by ``n`` (not n - 1)."""
    n = len(residuals) if n is None else n
    if n != len(residuals) or n < 1:
        raise InvalidInputError(f"n={n} does not match {len(residuals)} residuals")
    c = residuals.centered()
    return float(c @ c) / n


def log_likelihood(sigma2: float, residuals: ResidualSet) -> float:
    """Gaussian log-likelihood of the centered residuals at variance ``sigma2``."""
    if not (math.isfinite(sigma2) and sigma2 > 0):
        raise InvalidInputError(f"variance must be > 0, got {sigma2}")
    n = len(residuals)
    c = residuals.centered()
    return (
        -0.5 * n * math.log(2.0 * math.pi)
        - 0.5 * n * math.log(sigma2)
        - float(c @ c) / (2.0 * sigma2)
    )


def _intervals_from_hessian(
    hess: FloatArray,
    theta: FloatArray,
    sigma2: float,
    level: float,
    depth_bounds: tuple[float, float],
) -> dict[str, ConfidenceInterval]:
    if not np.all(np.isfinite(hess)):
        raise DegenerateGeometryError("non-finite Hessian")
    eig = np.linalg.eigvalsh(hess)
    if eig.min() <= _SINGULAR_RTOL * max(abs(eig).max(), np.finfo(float).tiny):
        raise DegenerateGeometryError(f"singular Hessian (eigenvalues {eig})")

    # observed information of the profile likelihood is H / (2 sigma2)
    cov = 2.0 * sigma2 * np.linalg.inv(hess)
    variances = np.diag(cov)
    if np.any(variances < 0):
        raise DegenerateGeometryError("negative variance from inverted Hessian")
    half = float(stats.norm.ppf(0.5 + level / 2.0)) * np.sqrt(variances)

    limits = [(-90.0, 90.0), (-180.0, 180.0), depth_bounds]
    return {
        name: ConfidenceInterval(
            max(theta[k] - half[k], limits[k][0]),
            min(theta[k] + half[k], limits[k][1]),
        )
        for k, name in enumerate(PARAMETERS)
    }


def hessian_confidence(
    fit: FitResult,
    triggers: Sequence[Trigger],
    level: float | None = None,
    cfg: EstimatorConfig | None = None,
    earth: EarthModel = DEFAULT_EARTH,
) -> dict[str, ConfidenceInterval]:
    """
    Wald intervals for (lat, lon, depth) from the finite-difference Hessian
    of the objective at the fitted hypocenter.

    Args:
        fit: A converged fit.
        triggers: The triggers the fit was computed from.
        level: Confidence level (default: ``cfg.confidence_level``).
        cfg: Supplies the depth bounds and finite-difference step.
        earth: Spherical earth model.

    Returns:
        Mapping of parameter name to interval; depth truncated at the bounds.

    Raises:
        DegenerateGeometryError: If the Hessian is singular.
    """
    cfg = cfg or EstimatorConfig()
    level = cfg.confidence_level if level is None else level
    if not 0.0 < level < 1.0:
        raise InvalidInputError(f"confidence level {level} outside (0, 1)")
    if not fit.converged:
        logger.warning("Confidence intervals for an unconverged fit", wave=str(fit.wave))
    objective = TravelTimeObjective(triggers, fit.wave, earth)
    theta = fit.hypocenter.as_theta()
    return _intervals_from_hessian(
        objective.hessian(theta, cfg.hessian_step),
        theta,
        fit.sigma2,
        level,
        (cfg.depth_min_km, cfg.depth_max_km),
    )


def _initial_simplex(x0: FloatArray, bounds: FloatArray) -> FloatArray:
    simplex = np.tile(x0, (4, 1))
    for k in range(3):
        step = _SIMPLEX_STEP[k]
        if x0[k] + step > bounds[k, 1]:
            step = -step
        simplex[k + 1, k] += step
    return simplex


def _build_fit(
    objective: TravelTimeObjective,
    theta: FloatArray,
    cfg: EstimatorConfig,
    **extra: object,
) -> FitResult:
    residuals = ResidualSet.from_deltas(objective.residuals(theta))
    sigma2 = estimate_variance(residuals)
    loglik = log_likelihood(sigma2, residuals) if sigma2 > 0 else math.inf
    depth = float(theta[2])
    return FitResult(
        hypocenter=Hypocenter.at(float(theta[0]), float(theta[1]), depth),
        sigma2=sigma2,
        residuals=residuals,
        objective=objective(theta),
        wave=objective.wave,
        n=objective.n,
        log_likelihood=loglik,
        confidence_level=cfg.confidence_level,
        at_depth_bound=(
            abs(depth - cfg.depth_min_km) <= 1e-6 or abs(depth - cfg.depth_max_km) <= 1e-6
        ),
        **extra,  # type: ignore[arg-type]
    )


def estimate_hypocenter(
    triggers: Sequence[Trigger],
    v: WaveSpeed,
    cfg: EstimatorConfig | None = None,
    earth: EarthModel = DEFAULT_EARTH,
    intervals: bool = True,
) -> FitResult:
    """
    Fit epicentre and depth to trigger times at wave speed ``v``.

    Runs ``cfg.restarts`` bounded simplex descents from starts drawn
    uniformly in the expanded trigger bounding box and keeps the lowest
    objective (ties: lowest restart index). With ``intervals=False`` the
    Hessian is not evaluated: ``conf_intervals`` is empty and
    ``degenerate`` stays False for non-coincident triggers.

    Raises:
        InsufficientDataError: Fewer than four triggers.
        NonConvergenceError: No restart converged; carries the best effort.
    """
    cfg = cfg or EstimatorConfig()
    n = len(triggers)
    if n < MIN_TRIGGERS:
        raise InsufficientDataError(n, MIN_TRIGGERS)

    objective = TravelTimeObjective(triggers, v, earth)

    if objective.is_coincident():
        logger.warning("Coincident triggers, depth unidentifiable", n=n, wave=str(v))
        theta = np.array([objective.lat[0], objective.lon[0], cfg.depth_min_km])
        fit = _build_fit(
            objective,
            theta,
            cfg,
            converged=True,
            restarts_used=0,
            converged_restarts=0,
            degenerate=True,
        )
        return replace(
            fit, conf_intervals={name: ConfidenceInterval.unbounded() for name in PARAMETERS}
        )

    bounds = objective.search_bounds(cfg)
    rng = np.random.default_rng(cfg.seed)
    starts = rng.uniform(bounds[:, 0], bounds[:, 1], size=(cfg.restarts, 3))

    best: optimize.OptimizeResult | None = None
    converged_restarts = 0
    iterations = 0
    for x0 in starts:
        res = optimize.minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=optimize.Bounds(bounds[:, 0], bounds[:, 1]),
            options={
                "initial_simplex": _initial_simplex(x0, bounds),
                "xatol": _SIMPLEX_XATOL,
                "fatol": cfg.tolerance,
                "maxiter": cfg.max_iterations,
            },
        )
        converged_restarts += bool(res.success)
        iterations += int(res.nit)
        if best is None or res.fun < best.fun:
            best = res
    assert best is not None

    theta = np.clip(best.x, bounds[:, 0], bounds[:, 1])
    fit = _build_fit(
        objective,
        theta,
        cfg,
        converged=bool(best.success),
        restarts_used=cfg.restarts,
        converged_restarts=converged_restarts,
        iterations=iterations,
    )

    if intervals:
        fit = _with_intervals(fit, objective, theta, cfg)

    if converged_restarts == 0:
        logger.warning("Hypocenter fit did not converge", n=n, wave=str(v))
        raise NonConvergenceError(fit, cfg.restarts)
    return fit


def _with_intervals(
    fit: FitResult, objective: TravelTimeObjective, theta: FloatArray, cfg: EstimatorConfig
) -> FitResult:
    try:
        intervals = _intervals_from_hessian(
            objective.hessian(theta, cfg.hessian_step),
            theta,
            fit.sigma2,
            cfg.confidence_level,
            (cfg.depth_min_km, cfg.depth_max_km),
        )
        return replace(fit, conf_intervals=intervals)
    except DegenerateGeometryError as e:
        logger.warning(
            "Degenerate trigger geometry", n=fit.n, wave=str(fit.wave), error=str(e)
        )
        return replace(
            fit,
            degenerate=True,
            conf_intervals={name: ConfidenceInterval.unbounded() for name in PARAMETERS},
        )
