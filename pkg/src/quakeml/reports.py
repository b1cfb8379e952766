"""
Serializable reports emitted by the command-line interface.

Field order is part of the output format: reports are dumped with
``model_dump_json(by_alias=True)`` and keys appear in declaration order.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from typing import Any

from pydantic import BaseModel, ConfigDict, Field

from quakeml.estimation import ConfidenceInterval, FitResult, Hypocenter, Trigger
from quakeml.geo import haversine_km
from quakeml.hypothesis import Classification, VelocityTestResult, Verdict


def _finite(x: float) -> float | None:
    return x if math.isfinite(x) else None


class IntervalModel(BaseModel):
    """Confidence interval; ``null`` bounds mean unbounded."""

    lower: float | None
    upper: float | None

    @classmethod
    def of(cls, ci: ConfidenceInterval) -> IntervalModel:
        return cls(lower=_finite(ci.lower), upper=_finite(ci.upper))


class EstimateModel(BaseModel):
    lat: float
    lon: float
    depth_km: float
    ci: dict[str, IntervalModel]

    @classmethod
    def of(cls, fit: FitResult) -> EstimateModel:
        h = fit.hypocenter
        return cls(
            lat=h.epicentre.lat,
            lon=h.epicentre.lon,
            depth_km=h.depth_km,
            ci={name: IntervalModel.of(ci) for name, ci in fit.conf_intervals.items()},
        )


class TruthErrors(BaseModel):
    """Real hypocenter and absolute estimation errors."""

    real: dict[str, float]
    lat: float
    lon: float
    depth_km: float
    epicentre_km: float

    @classmethod
    def of(cls, fit: FitResult, truth: Hypocenter) -> TruthErrors:
        h = fit.hypocenter
        return cls(
            real={
                "lat": truth.epicentre.lat,
                "lon": truth.epicentre.lon,
                "depth_km": truth.depth_km,
            },
            lat=abs(h.epicentre.lat - truth.epicentre.lat),
            lon=abs(h.epicentre.lon - truth.epicentre.lon),
            depth_km=abs(h.depth_km - truth.depth_km),
            epicentre_km=float(
                haversine_km(
                    h.epicentre.lat, h.epicentre.lon, truth.epicentre.lat, truth.epicentre.lon
                )
            ),
        )


class VelocityBlock(BaseModel):
    """Fit and variance test at one assumed wave speed."""

    model_config = ConfigDict(populate_by_name=True)

    v: float
    estimate: EstimateModel
    sigma2: float
    statistic: float = Field(serialization_alias="T")
    df: int
    critical: float
    rejected: bool
    wave: str
    converged: bool
    degenerate: bool
    at_depth_bound: bool
    confidence_level: float
    truth: TruthErrors | None = None

    @classmethod
    def of(cls, test: VelocityTestResult, truth: Hypocenter | None = None) -> VelocityBlock:
        fit = test.fit
        return cls(
            v=test.wave.v_kms,
            estimate=EstimateModel.of(fit),
            sigma2=fit.sigma2,
            statistic=test.statistic,
            df=test.df,
            critical=test.critical,
            rejected=test.rejected,
            wave=test.wave.label.value,
            converged=fit.converged,
            degenerate=fit.degenerate,
            at_depth_bound=fit.at_depth_bound,
            confidence_level=fit.confidence_level,
            truth=TruthErrors.of(fit, truth) if truth else None,
        )


class InputDigest(BaseModel):
    """Size and extent of the trigger list."""

    n: int
    lat_min: float | None
    lat_max: float | None
    lon_min: float | None
    lon_max: float | None
    t_span_s: float | None

    @classmethod
    def of(cls, triggers: Sequence[Trigger]) -> InputDigest:
        if not triggers:
            return cls(n=0, lat_min=None, lat_max=None, lon_min=None, lon_max=None, t_span_s=None)
        lats = [t.location.lat for t in triggers]
        lons = [t.location.lon for t in triggers]
        times = [t.time for t in triggers]
        return cls(
            n=len(triggers),
            lat_min=min(lats),
            lat_max=max(lats),
            lon_min=min(lons),
            lon_max=max(lons),
            t_span_s=max(times) - min(times),
        )


class ClassificationReport(BaseModel):
    verdict: Verdict
    tests: list[VelocityBlock]
    timing_ms: float
    seed: int
    config: dict[str, Any]
    input: InputDigest
    message: str | None = None

    @classmethod
    def of(
        cls,
        result: Classification,
        triggers: Sequence[Trigger],
        timing_ms: float,
        seed: int,
        config: Mapping[str, Any],
        truth: Hypocenter | None = None,
    ) -> ClassificationReport:
        return cls(
            verdict=result.verdict,
            tests=[VelocityBlock.of(t, truth) for t in result.tests],
            timing_ms=timing_ms,
            seed=seed,
            config=dict(config),
            input=InputDigest.of(triggers),
        )

    @classmethod
    def unclassifiable(
        cls,
        triggers: Sequence[Trigger],
        message: str,
        seed: int,
        config: Mapping[str, Any],
    ) -> ClassificationReport:
        return cls(
            verdict=Verdict.UNCLASSIFIABLE,
            tests=[],
            timing_ms=0.0,
            seed=seed,
            config=dict(config),
            input=InputDigest.of(triggers),
            message=message,
        )


class EstimateReport(BaseModel):
    """Estimation without testing: estimates, intervals and residuals."""

    v: float
    wave: str
    estimate: EstimateModel
    sigma2: float
    objective: float
    log_likelihood: float | None
    converged: bool
    degenerate: bool
    at_depth_bound: bool
    restarts: int
    converged_restarts: int
    residuals: list[float]
    timing_ms: float
    seed: int
    config: dict[str, Any]
    input: InputDigest

    @classmethod
    def of(
        cls,
        fit: FitResult,
        triggers: Sequence[Trigger],
        timing_ms: float,
        seed: int,
        config: Mapping[str, Any],
    ) -> EstimateReport:
        return cls(
            v=fit.wave.v_kms,
            wave=fit.wave.label.value,
            estimate=EstimateModel.of(fit),
            sigma2=fit.sigma2,
            objective=fit.objective,
            log_likelihood=_finite(fit.log_likelihood),
            converged=fit.converged,
            degenerate=fit.degenerate,
            at_depth_bound=fit.at_depth_bound,
            restarts=fit.restarts_used,
            converged_restarts=fit.converged_restarts,
            residuals=list(fit.residuals.deltas),
            timing_ms=timing_ms,
            seed=seed,
            config=dict(config),
            input=InputDigest.of(triggers),
        )
