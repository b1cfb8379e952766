"""
Spherical-earth geodesy and travel-time kinematics.

Degrees at the API boundary, radians inside. The scalar functions validate
their inputs; the ``*_km`` array helpers do not and are meant for hot paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import numpy.typing as npt

from quakeml.errors import InvalidInputError

ArrayLike = npt.ArrayLike
FloatArray = npt.NDArray[np.float64]

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True, slots=True)
class GeoPoint:
    """A point on the earth surface, in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise InvalidInputError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidInputError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise InvalidInputError(f"longitude {self.lon} outside [-180, 180]")

    def __str__(self) -> str:
        return f"({self.lat:.4f}, {self.lon:.4f})"


@dataclass(frozen=True, slots=True)
class EarthModel:
    """Spherical earth."""

    radius_km: float = EARTH_RADIUS_KM

    def __post_init__(self) -> None:
        if not (math.isfinite(self.radius_km) and self.radius_km > 0):
            raise InvalidInputError(f"earth radius must be positive, got {self.radius_km}")


DEFAULT_EARTH = EarthModel()


class WaveLabel(str, Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"


@dataclass(frozen=True, slots=True)
class WaveSpeed:
    """Seismic wave speed assumed for every trigger of a detection."""

    v_kms: float
    label: WaveLabel

    def __post_init__(self) -> None:
        if not (math.isfinite(self.v_kms) and self.v_kms > 0):
            raise InvalidInputError(f"wave speed must be positive, got {self.v_kms}")

    @classmethod
    def primary(cls, v_kms: float = 7.8) -> WaveSpeed:
        return cls(v_kms, WaveLabel.PRIMARY)

    @classmethod
    def secondary(cls, v_kms: float = 4.5) -> WaveSpeed:
        return cls(v_kms, WaveLabel.SECONDARY)

    def __str__(self) -> str:
        return f"{self.label.value}@{self.v_kms:g}km/s"


PRIMARY_WAVE = WaveSpeed.primary()
SECONDARY_WAVE = WaveSpeed.secondary()


def haversine_km(
    lat1: ArrayLike,
    lon1: ArrayLike,
    lat2: ArrayLike,
    lon2: ArrayLike,
    radius_km: float = EARTH_RADIUS_KM,
) -> FloatArray:
    """Great-circle distance in km between broadcastable arrays of degrees."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    a = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * radius_km * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def chord_hypocentral_distance(
    epi_km: ArrayLike, depth_km: ArrayLike, radius_km: float = EARTH_RADIUS_KM
) -> FloatArray:
    """Straight-line hypocenter-to-surface distance (unvalidated)."""
    epi = np.asarray(epi_km, dtype=float)
    depth = np.asarray(depth_km, dtype=float)
    s = np.sin(epi / (2.0 * radius_km))
    return np.sqrt(depth**2 + 4.0 * radius_km * (radius_km - depth) * s**2)


def epicentral_distance(
    a: GeoPoint, b: GeoPoint, earth: EarthModel = DEFAULT_EARTH
) -> float:
    """
    Great-circle distance between two surface points.

    Args:
        a: First point.
        b: Second point.
        earth: Spherical earth model.

    Returns:
        Distance in km, in [0, pi * R].
    """
    return float(haversine_km(a.lat, a.lon, b.lat, b.lon, earth.radius_km))


def hypocentral_distance(
    epi_dist: float, depth: float, earth: EarthModel = DEFAULT_EARTH
) -> float:
    """
    Distance from a hypocenter at ``depth`` km to a surface point ``epi_dist``
    km (great-circle) from its epicentre.
    """
    radius = earth.radius_km
    if not (math.isfinite(epi_dist) and math.isfinite(depth)):
        raise InvalidInputError("non-finite distance or depth")
    if not 0.0 <= epi_dist <= math.pi * radius * (1 + 1e-12):
        raise InvalidInputError(f"epicentral distance {epi_dist} outside [0, pi R]")
    if not 0.0 <= depth < radius:
        raise InvalidInputError(f"depth {depth} outside [0, R)")
    return float(chord_hypocentral_distance(epi_dist, depth, radius))


def expected_trigger_time(
    hypo_dist: float, v: WaveSpeed, t_origin: float = 0.0
) -> float:
    """Arrival time of the wave at distance ``hypo_dist`` km."""
    if not (math.isfinite(hypo_dist) and hypo_dist >= 0):
        raise InvalidInputError(f"hypocentral distance must be >= 0, got {hypo_dist}")
    if not math.isfinite(t_origin):
        raise InvalidInputError("non-finite origin time")
    return hypo_dist / v.v_kms + t_origin
