"""
Pytest configuration and fixtures for QuakeML tests.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
import pytest

from quakeml.detector import Smartphone
from quakeml.estimation import EstimatorConfig, Hypocenter, Trigger
from quakeml.geo import PRIMARY_WAVE, GeoPoint, WaveSpeed, chord_hypocentral_distance, haversine_km
from quakeml.io import write_triggers
from quakeml.networks import UniformBoxNetwork

GENOVA = Hypocenter.at(44.46, 9.06, 8.0)
ACAPULCO = GeoPoint(16.86, -99.88)

TriggerFactory = Callable[..., list[Trigger]]


def synthetic_triggers(
    truth: Hypocenter,
    points: Sequence[GeoPoint],
    wave: WaveSpeed = PRIMARY_WAVE,
    noise_variance: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list[Trigger]:
    """Triggers at the travel-time model arrivals plus Gaussian noise."""
    lat = np.array([p.lat for p in points])
    lon = np.array([p.lon for p in points])
    epi = haversine_km(truth.epicentre.lat, truth.epicentre.lon, lat, lon)
    times = chord_hypocentral_distance(epi, truth.depth_km) / wave.v_kms + truth.t_origin
    if noise_variance > 0:
        assert rng is not None
        times = times + rng.normal(0.0, np.sqrt(noise_variance), times.size)
    return [
        Trigger(p, float(t), f"p{i:03d}") for i, (p, t) in enumerate(zip(points, times))
    ]


def points_in_box(
    rng: np.random.Generator, n: int, center: GeoPoint, half_width_deg: float
) -> list[GeoPoint]:
    lat = rng.uniform(center.lat - half_width_deg, center.lat + half_width_deg, n)
    lon = rng.uniform(center.lon - half_width_deg, center.lon + half_width_deg, n)
    return [GeoPoint(float(a), float(b)) for a, b in zip(lat, lon)]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)


@pytest.fixture
def fast_config() -> EstimatorConfig:
    """Fewer restarts, same search, for tests that fit many times."""
    return EstimatorConfig(restarts=5, seed=11)


@pytest.fixture
def trigger_factory(rng: np.random.Generator) -> TriggerFactory:
    """Build triggers for a hypocenter observed by ``n`` phones around it."""

    def make(
        truth: Hypocenter = GENOVA,
        n: int = 12,
        half_width_deg: float = 0.25,
        noise_variance: float = 0.0,
        wave: WaveSpeed = PRIMARY_WAVE,
    ) -> list[Trigger]:
        points = points_in_box(rng, n, truth.epicentre, half_width_deg)
        return synthetic_triggers(truth, points, wave, noise_variance, rng)

    return make


@pytest.fixture
def genova_triggers() -> list[Trigger]:
    """A true event: 21 phones near Genova, trigger time noise variance 0.25 s^2."""
    rng = np.random.default_rng(4446)
    points = points_in_box(rng, 21, GENOVA.epicentre, 0.2)
    return synthetic_triggers(GENOVA, points, PRIMARY_WAVE, 0.25, rng)


@pytest.fixture
def acapulco_triggers() -> list[Trigger]:
    """A false detection: 108 phones triggering at uniform random times."""
    rng = np.random.default_rng(10899)
    points = points_in_box(rng, 108, ACAPULCO, 0.25)
    times = np.sort(rng.uniform(0.0, 12.0, len(points)))
    return [Trigger(p, float(t), f"a{i:03d}") for i, (p, t) in enumerate(zip(points, times))]


@pytest.fixture
def lima_network() -> list[Smartphone]:
    return UniformBoxNetwork(1000, (-12.39, -11.74), (-77.17, -76.66)).load(
        np.random.default_rng(5)
    )


@pytest.fixture
def trigger_csv(tmp_path: Path) -> Callable[[Sequence[Trigger], str], Path]:
    """Write triggers to a CSV file under the test's temporary directory."""

    def write(triggers: Sequence[Trigger], name: str = "triggers.csv") -> Path:
        path = tmp_path / name
        write_triggers(triggers, path)
        return path

    return write
