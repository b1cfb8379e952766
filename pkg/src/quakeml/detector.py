"""
Ratio-based real-time detection over a smartphone trigger stream.

For every candidate area (a disc of ``radius_km`` centered on a triggering
phone) the detector compares the triggers of the last ``window_s`` seconds
with the active phones inside the disc. The first time the ratio exceeds
``ratio_threshold`` with at least ``min_triggers`` triggers, a detection
fires and the triggers of that disc and window are returned.

``detect`` replays a whole sorted stream; ``StreamingDetector`` is the
push-style equivalent for live feeds.
"""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from quakeml.errors import InvalidInputError
from quakeml.estimation import Trigger
from quakeml.geo import DEFAULT_EARTH, EarthModel, FloatArray, GeoPoint, haversine_km

logger = structlog.get_logger()


@dataclass(frozen=True, slots=True)
class Smartphone:
    """A phone of the network; ``active`` phones are known to be monitoring."""

    id: str
    location: GeoPoint
    active: bool = True


class DetectorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    radius_km: float = Field(30.0, gt=0.0)
    window_s: float = Field(10.0, gt=0.0)
    ratio_threshold: float = Field(0.25, gt=0.0, le=1.0)
    min_triggers: int = Field(4, ge=1)


@dataclass(frozen=True)
class Detection:
    """A fired detection and the triggers that concurred to it."""

    center: GeoPoint
    center_id: str | None
    detection_time: float
    triggers: tuple[Trigger, ...]
    active_count: int

    @property
    def triggering_count(self) -> int:
        return len(self.triggers)

    @property
    def ratio(self) -> float:
        return self.triggering_count / self.active_count


def _active_arrays(roster: Sequence[Smartphone]) -> tuple[FloatArray, FloatArray]:
    active = [p for p in roster if p.active]
    return (
        np.array([p.location.lat for p in active], dtype=float),
        np.array([p.location.lon for p in active], dtype=float),
    )


def _fires(count: int, active: int, cfg: DetectorConfig) -> bool:
    return active > 0 and count >= cfg.min_triggers and count > cfg.ratio_threshold * active


def _tie_key(trigger: Trigger, index: int) -> tuple[bool, str, int]:
    return (trigger.id is None, trigger.id or "", index)


def _check_sorted(times: FloatArray) -> None:
    if times.size > 1 and np.any(np.diff(times) < 0):
        first = int(np.argmax(np.diff(times) < 0)) + 1
        raise InvalidInputError(f"trigger stream not sorted by time at position {first}")


def detect(
    stream: Sequence[Trigger],
    roster: Sequence[Smartphone],
    cfg: DetectorConfig | None = None,
    earth: EarthModel = DEFAULT_EARTH,
) -> Detection | None:
    """
    Replay a time-sorted trigger stream and return the first detection.

    Candidate centers are the locations of the triggers in the current
    window. Centers firing on the same trigger are ranked by trigger id,
    then stream position.

    Raises:
        InvalidInputError: If the stream is not sorted or the roster is empty.
    """
    cfg = cfg or DetectorConfig()
    if not roster:
        raise InvalidInputError("empty smartphone roster")
    if not stream:
        return None

    times = np.array([t.time for t in stream])
    _check_sorted(times)
    lat = np.array([t.location.lat for t in stream])
    lon = np.array([t.location.lon for t in stream])

    phone_lat, phone_lon = _active_arrays(roster)
    active_counts = np.count_nonzero(
        haversine_km(
            lat[:, None], lon[:, None], phone_lat[None, :], phone_lon[None, :], earth.radius_km
        )
        <= cfg.radius_km,
        axis=1,
    )
    near = (
        haversine_km(lat[:, None], lon[:, None], lat[None, :], lon[None, :], earth.radius_km)
        <= cfg.radius_km
    )

    counts = np.zeros(len(stream), dtype=int)
    lo_idx = 0
    for k in range(len(stream)):
        start = int(np.searchsorted(times, times[k] - cfg.window_s, side="left"))
        for j in range(lo_idx, start):
            counts[j + 1 : k] -= near[j, j + 1 : k]
        lo_idx = start
        row = near[k, lo_idx : k + 1]
        counts[lo_idx:k] += row[:-1]
        counts[k] = int(row.sum())

        window = slice(lo_idx, k + 1)
        fires = (
            (active_counts[window] > 0)
            & (counts[window] >= cfg.min_triggers)
            & (counts[window] > cfg.ratio_threshold * active_counts[window])
        )
        if not fires.any():
            continue
        firing = lo_idx + np.flatnonzero(fires)
        center = min(firing, key=lambda i: _tie_key(stream[i], int(i)))
        members = [i for i in range(lo_idx, k + 1) if near[center, i]]
        detection = Detection(
            center=stream[center].location,
            center_id=stream[center].id,
            detection_time=float(times[k]),
            triggers=tuple(stream[i] for i in members),
            active_count=int(active_counts[center]),
        )
        logger.debug(
            "Detection fired",
            center=str(detection.center),
            n=detection.triggering_count,
            active=detection.active_count,
            t=detection.detection_time,
        )
        return detection
    return None


@dataclass(frozen=True)
class WindowSnapshot:
    """Read-only view of a streaming detector's sliding window."""

    time: float | None
    triggers: tuple[Trigger, ...]
    counts: tuple[int, ...]
    fired: bool


@dataclass(slots=True)
class _WindowEntry:
    trigger: Trigger
    index: int
    count: int
    active: int


class StreamingDetector:
    """
    Push-style detector with an incrementally maintained sliding window.

    Feed triggers in time order with ``push``; the call that completes the
    detection returns it, later calls are ignored until ``reset``.
    Single writer: only one thread may push.

    Example:
        ```python
        detector = StreamingDetector(roster)
        for trigger in feed:
            detection = detector.push(trigger)
            if detection:
                alert(detection)
                break
        ```
    """

    def __init__(
        self,
        roster: Sequence[Smartphone],
        cfg: DetectorConfig | None = None,
        earth: EarthModel = DEFAULT_EARTH,
    ):
        if not roster:
            raise InvalidInputError("empty smartphone roster")
        self.cfg = cfg or DetectorConfig()
        self.earth = earth
        self._phone_lat, self._phone_lon = _active_arrays(roster)
        self.reset()

    def reset(self) -> None:
        """Empty the window and re-arm the detector."""
        self._window: deque[_WindowEntry] = deque()
        self._pushed = 0
        self._last_time: float | None = None
        self._detection: Detection | None = None

    @property
    def fired(self) -> bool:
        return self._detection is not None

    @property
    def detection(self) -> Detection | None:
        return self._detection

    def _near_window(self, trigger: Trigger) -> list[bool]:
        if not self._window:
            return []
        lat = np.array([e.trigger.location.lat for e in self._window])
        lon = np.array([e.trigger.location.lon for e in self._window])
        distances = haversine_km(
            trigger.location.lat, trigger.location.lon, lat, lon, self.earth.radius_km
        )
        return list(distances <= self.cfg.radius_km)

    def _active_near(self, trigger: Trigger) -> int:
        distances = haversine_km(
            trigger.location.lat,
            trigger.location.lon,
            self._phone_lat,
            self._phone_lon,
            self.earth.radius_km,
        )
        return int(np.count_nonzero(distances <= self.cfg.radius_km))

    def _expire(self, now: float) -> None:
        horizon = now - self.cfg.window_s
        while self._window and self._window[0].trigger.time < horizon:
            old = self._window.popleft()
            for entry, is_near in zip(self._window, self._near_window(old.trigger)):
                if is_near:
                    entry.count -= 1

    def push(self, trigger: Trigger) -> Detection | None:
        """
        Add one trigger.

        Returns:
            The detection if this trigger completes one, otherwise None.

        Raises:
            InvalidInputError: If the trigger is older than the previous one.
        """
        if self._detection is not None:
            return None
        if self._last_time is not None and trigger.time < self._last_time:
            raise InvalidInputError(
                f"trigger at t={trigger.time} older than previous t={self._last_time}"
            )
        self._last_time = trigger.time
        self._expire(trigger.time)

        candidates = []
        near = self._near_window(trigger)
        for entry, is_near in zip(self._window, near):
            if is_near:
                entry.count += 1
                candidates.append(entry)
        new = _WindowEntry(trigger, self._pushed, sum(near) + 1, self._active_near(trigger))
        self._pushed += 1
        self._window.append(new)
        candidates.append(new)

        # only centers whose count just grew can newly satisfy the ratio
        firing = [e for e in candidates if _fires(e.count, e.active, self.cfg)]
        if not firing:
            return None
        center = min(firing, key=lambda e: _tie_key(e.trigger, e.index))
        members = tuple(
            e.trigger
            for e, is_near in zip(self._window, self._near_window(center.trigger))
            if is_near
        )
        self._detection = Detection(
            center=center.trigger.location,
            center_id=center.trigger.id,
            detection_time=trigger.time,
            triggers=members,
            active_count=center.active,
        )
        logger.info(
            "Detection fired",
            center=str(self._detection.center),
            n=self._detection.triggering_count,
            active=self._detection.active_count,
        )
        return self._detection

    def feed(self, triggers: Iterable[Trigger]) -> Detection | None:
        """Push triggers until one fires."""
        for trigger in triggers:
            detection = self.push(trigger)
            if detection is not None:
                return detection
        return None

    def snapshot(self) -> WindowSnapshot:
        return WindowSnapshot(
            time=self._last_time,
            triggers=tuple(e.trigger for e in self._window),
            counts=tuple(e.count for e in self._window),
            fired=self.fired,
        )
