"""
Chi-square variance test and the two-velocity true/false rule.

A detection is fitted once per assumed wave speed. Each fit is tested for
H0: sigma^2 = delta against H1: sigma^2 > delta with
T = (n - 3) * sigma2_hat / delta ~ chi2(n - 3). The detection is false only
when H0 is rejected at both speeds.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import structlog
from pydantic import BaseModel, ConfigDict, Field
from scipy import special

from quakeml.errors import InsufficientDataError, InvalidInputError
from quakeml.estimation import (
    MIN_TRIGGERS,
    EstimatorConfig,
    FitResult,
    Trigger,
    estimate_hypocenter,
)
from quakeml.geo import (
    DEFAULT_EARTH,
    PRIMARY_WAVE,
    SECONDARY_WAVE,
    EarthModel,
    WaveSpeed,
)

logger = structlog.get_logger()

_NEWTON_MAX_STEPS = 200
_NEWTON_RTOL = 1e-13


class TestSpec(BaseModel):
    """Null variance ``delta`` (s^2) and significance level ``alpha``."""

    __test__ = False
    model_config = ConfigDict(frozen=True, extra="forbid")

    delta: float = Field(0.6, gt=0.0)
    alpha: float = Field(0.01, gt=0.0, lt=1.0)


class Verdict(str, Enum):
    TRUE_EARTHQUAKE = "true_earthquake"
    FALSE_DETECTION = "false_detection"
    UNCLASSIFIABLE = "unclassifiable"


@dataclass(frozen=True)
class VelocityTestResult:
    wave: WaveSpeed
    statistic: float
    df: int
    critical: float
    rejected: bool
    fit: FitResult
    delta: float
    alpha: float


@dataclass(frozen=True)
class Classification:
    primary_test: VelocityTestResult
    secondary_test: VelocityTestResult
    verdict: Verdict

    @property
    def tests(self) -> tuple[VelocityTestResult, VelocityTestResult]:
        return (self.primary_test, self.secondary_test)


def test_statistic(sigma2: float, n: int, delta: float) -> float:
    """
    Variance test statistic ``(n - 3) * sigma2 / delta``.

    Raises:
        InsufficientDataError: If ``n < 4``.
        InvalidInputError: If ``delta <= 0`` or ``sigma2 < 0``.
    """
    if n < MIN_TRIGGERS:
        raise InsufficientDataError(n, MIN_TRIGGERS)
    if not (math.isfinite(delta) and delta > 0):
        raise InvalidInputError(f"delta must be > 0, got {delta}")
    if not (math.isfinite(sigma2) and sigma2 >= 0):
        raise InvalidInputError(f"variance must be >= 0, got {sigma2}")
    return (n - 3) * sigma2 / delta


test_statistic.__test__ = False  # type: ignore[attr-defined]


def chi_square_cdf(x: float, df: float) -> float:
    """P(X <= x) for X ~ chi2(df): regularized lower incomplete gamma."""
    if x <= 0:
        return 0.0
    return float(special.gammainc(df / 2.0, x / 2.0))


def _chi_square_pdf(x: float, df: float) -> float:
    k = df / 2.0
    return math.exp((k - 1.0) * math.log(x) - x / 2.0 - k * math.log(2.0) - special.gammaln(k))


def _wilson_hilferty(p: float, df: float) -> float:
    c = 2.0 / (9.0 * df)
    x = df * (1.0 - c + float(special.ndtri(p)) * math.sqrt(c)) ** 3
    if x > 0:
        return x
    # lower tail: P(k, x/2) ~ (x/2)^k / Gamma(k + 1)
    k = df / 2.0
    return 2.0 * math.exp((math.log(p) + special.gammaln(k + 1.0)) / k)


@lru_cache(maxsize=4096)
def chi_square_quantile(p: float, df: int) -> float:
    """
    Inverse CDF of chi2(df).

    Newton iterations on the regularized incomplete gamma function, seeded
    by the Wilson-Hilferty approximation and safeguarded by a bracket.

    Raises:
        InvalidInputError: If ``p`` is outside (0, 1) or ``df < 1``.
    """
    if not 0.0 < p < 1.0:
        raise InvalidInputError(f"probability {p} outside (0, 1)")
    if df < 1:
        raise InvalidInputError(f"degrees of freedom must be >= 1, got {df}")

    x = _wilson_hilferty(p, df)
    lo, hi = 0.0, math.inf
    for _ in range(_NEWTON_MAX_STEPS):
        f = chi_square_cdf(x, df) - p
        if f == 0.0:
            return x
        if f < 0:
            lo = x
        else:
            hi = x
        density = _chi_square_pdf(x, df)
        step = f / density if density > 0 else math.nan
        if math.isfinite(step) and abs(step) <= _NEWTON_RTOL * x:
            return x - step
        candidate = x - step
        if not (math.isfinite(candidate) and lo < candidate < hi):
            candidate = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * x + 1.0
        x = candidate
    logger.warning("Chi-square quantile did not reach tolerance", p=p, df=df, x=x)
    return x


def verdict_from_flags(primary_rejected: bool, secondary_rejected: bool) -> Verdict:
    if primary_rejected and secondary_rejected:
        return Verdict.FALSE_DETECTION
    return Verdict.TRUE_EARTHQUAKE


def evaluate_fit(fit: FitResult, spec: TestSpec) -> VelocityTestResult:
    """Test an existing fit; no refitting."""
    df = fit.n - 3
    statistic = test_statistic(fit.sigma2, fit.n, spec.delta)
    critical = chi_square_quantile(1.0 - spec.alpha, df)
    return VelocityTestResult(
        wave=fit.wave,
        statistic=statistic,
        df=df,
        critical=critical,
        rejected=statistic > critical,
        fit=fit,
        delta=spec.delta,
        alpha=spec.alpha,
    )


def run_test(
    triggers: Sequence[Trigger],
    v: WaveSpeed,
    spec: TestSpec | None = None,
    cfg: EstimatorConfig | None = None,
    earth: EarthModel = DEFAULT_EARTH,
) -> VelocityTestResult:
    """Fit at wave speed ``v`` and run the upper-tail variance test."""
    fit = estimate_hypocenter(triggers, v, cfg, earth)
    return evaluate_fit(fit, spec or TestSpec())


def classify_fits(
    primary: FitResult, secondary: FitResult, spec: TestSpec | None = None
) -> Classification:
    """Apply the two-velocity rule to fits that already exist."""
    spec = spec or TestSpec()
    primary_test = evaluate_fit(primary, spec)
    secondary_test = evaluate_fit(secondary, spec)
    verdict = verdict_from_flags(primary_test.rejected, secondary_test.rejected)
    return Classification(primary_test, secondary_test, verdict)


def classify(
    triggers: Sequence[Trigger],
    spec: TestSpec | None = None,
    cfg: EstimatorConfig | None = None,
    waves: tuple[WaveSpeed, WaveSpeed] = (PRIMARY_WAVE, SECONDARY_WAVE),
    earth: EarthModel = DEFAULT_EARTH,
) -> Classification:
    """
    Classify a detection as a true earthquake or a false detection.

    The same ``delta`` is used at both speeds.
    """
    result = classify_fits(
        estimate_hypocenter(triggers, waves[0], cfg, earth),
        estimate_hypocenter(triggers, waves[1], cfg, earth),
        spec,
    )
    logger.info(
        "Detection classified",
        n=len(triggers),
        verdict=result.verdict.value,
        statistics=tuple(round(t.statistic, 2) for t in result.tests),
        critical=round(result.primary_test.critical, 2),
    )
    return result
