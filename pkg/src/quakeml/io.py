"""
CSV readers and writers for trigger streams and smartphone rosters.

triggers.csv: header ``id,lat,lon,t`` (``id`` optional), UTF-8, ``.`` decimals.
Times are seconds relative to any shared epoch.
roster.csv: header ``id,lat,lon`` with an optional ``active`` column.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from pathlib import Path
from typing import IO

import numpy as np
import pandas as pd
import structlog

from quakeml.detector import Smartphone
from quakeml.errors import TriggerFileError
from quakeml.estimation import Hypocenter, Trigger
from quakeml.geo import GeoPoint

logger = structlog.get_logger()

TRIGGER_COLUMNS = ("id", "lat", "lon", "t")
ROSTER_COLUMNS = ("id", "lat", "lon")
TRUTH_COLUMNS = ("replication", "lat", "lon", "depth_km", "t_origin")

_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f"}
_RANGES = {"lat": (-90.0, 90.0), "lon": (-180.0, 180.0)}


def _read_table(path: str | Path, required: Sequence[str]) -> pd.DataFrame:
    name = str(path)
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
            encoding="utf-8",
        )
    except FileNotFoundError:
        raise TriggerFileError(name, ["file not found"]) from None
    except pd.errors.EmptyDataError:
        raise TriggerFileError(
            name, [f"line 1: empty file, expected header {','.join(required)}"]
        ) from None
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise TriggerFileError(name, [str(e)]) from None

    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise TriggerFileError(name, [f"line 1: missing column(s) {', '.join(missing)}"])
    return frame


def _parse_float(cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        return math.nan


def _numeric_columns(
    frame: pd.DataFrame, columns: Sequence[str], diagnostics: list[str]
) -> dict[str, np.ndarray]:
    # float() on the exact text; pandas' fast parser can be one ulp off
    parsed = {}
    for column in columns:
        raw = frame[column].str.strip()
        values = np.array([_parse_float(cell) for cell in raw], dtype=float)
        bad = ~np.isfinite(values)
        low, high = _RANGES.get(column, (-np.inf, np.inf))
        out_of_range = ~bad & ((values < low) | (values > high))
        for row in np.flatnonzero(bad):
            diagnostics.append(f"line {row + 2}: invalid {column} value {raw.iloc[row]!r}")
        for row in np.flatnonzero(out_of_range):
            diagnostics.append(
                f"line {row + 2}: {column} {values[row]} outside [{low:g}, {high:g}]"
            )
        parsed[column] = values
    return parsed


def read_triggers(path: str | Path, allow_empty: bool = False) -> list[Trigger]:
    """
    Read a trigger file.

    Raises:
        TriggerFileError: With one line-numbered diagnostic per problem.
    """
    frame = _read_table(path, ("lat", "lon", "t"))
    diagnostics: list[str] = []
    if frame.empty and not allow_empty:
        diagnostics.append("line 2: no trigger rows")
    values = _numeric_columns(frame, ("lat", "lon", "t"), diagnostics)
    if diagnostics:
        raise TriggerFileError(str(path), diagnostics)

    ids = frame["id"].str.strip() if "id" in frame.columns else pd.Series([""] * len(frame))
    triggers = [
        Trigger(GeoPoint(float(la), float(lo)), float(t), i or None)
        for i, la, lo, t in zip(ids, values["lat"], values["lon"], values["t"])
    ]
    logger.debug("Read triggers", path=str(path), n=len(triggers))
    return triggers


def write_triggers(triggers: Sequence[Trigger], dest: str | Path | IO[str]) -> None:
    frame = pd.DataFrame(
        {
            "id": [t.id or "" for t in triggers],
            "lat": [t.location.lat for t in triggers],
            "lon": [t.location.lon for t in triggers],
            "t": [t.time for t in triggers],
        },
        columns=list(TRIGGER_COLUMNS),
    )
    frame.to_csv(dest, index=False, lineterminator="\n")


def _parse_flag(value: str) -> bool | None:
    lowered = value.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    return None


def read_roster(path: str | Path) -> list[Smartphone]:
    """
    Read a smartphone roster; phones are active unless ``active`` says otherwise.

    Raises:
        TriggerFileError: On missing columns, bad values or duplicate ids.
    """
    frame = _read_table(path, ROSTER_COLUMNS)
    diagnostics: list[str] = []
    if frame.empty:
        diagnostics.append("line 2: no smartphone rows")
    values = _numeric_columns(frame, ("lat", "lon"), diagnostics)

    ids = frame["id"].str.strip()
    for row in np.flatnonzero((ids == "").to_numpy()):
        diagnostics.append(f"line {row + 2}: missing id")
    for row in np.flatnonzero(ids.duplicated().to_numpy()):
        diagnostics.append(f"line {row + 2}: duplicate id {ids.iloc[row]!r}")

    active = [True] * len(frame)
    if "active" in frame.columns:
        for row, raw in enumerate(frame["active"]):
            flag = _parse_flag(raw)
            if flag is None:
                diagnostics.append(f"line {row + 2}: invalid active value {raw!r}")
            else:
                active[row] = flag
    if diagnostics:
        raise TriggerFileError(str(path), diagnostics)

    return [
        Smartphone(str(i), GeoPoint(float(la), float(lo)), a)
        for i, la, lo, a in zip(ids, values["lat"], values["lon"], active)
    ]


def write_roster(phones: Sequence[Smartphone], dest: str | Path | IO[str]) -> None:
    frame = pd.DataFrame(
        {
            "id": [p.id for p in phones],
            "lat": [p.location.lat for p in phones],
            "lon": [p.location.lon for p in phones],
            "active": [int(p.active) for p in phones],
        },
        columns=[*ROSTER_COLUMNS, "active"],
    )
    frame.to_csv(dest, index=False, lineterminator="\n")


def write_hypocenters(
    rows: Sequence[tuple[int, Hypocenter]], dest: str | Path | IO[str]
) -> None:
    """Ground truth of simulated events, one row per replication."""
    frame = pd.DataFrame(
        {
            "replication": [i for i, _ in rows],
            "lat": [h.epicentre.lat for _, h in rows],
            "lon": [h.epicentre.lon for _, h in rows],
            "depth_km": [h.depth_km for _, h in rows],
            "t_origin": [h.t_origin for _, h in rows],
        },
        columns=list(TRUTH_COLUMNS),
    )
    frame.to_csv(dest, index=False, lineterminator="\n")
