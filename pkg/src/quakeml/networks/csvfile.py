"""
Smartphone networks read from a roster CSV file (``id,lat,lon[,active]``).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import structlog

from quakeml.detector import Smartphone
from quakeml.io import read_roster
from quakeml.networks.base import NetworkSource

logger = structlog.get_logger()


class CsvRosterNetwork(NetworkSource):
    """Fixed network from a roster file; the random generator is unused."""

    def __init__(self, path: str | Path, name: str | None = None):
        super().__init__(name or Path(path).stem)
        self.path = Path(path)

    @property
    def kind(self) -> str:
        return "file"

    def _generate(self, rng: np.random.Generator) -> list[Smartphone]:
        phones = read_roster(self.path)
        logger.info("Loaded roster", path=str(self.path), count=len(phones))
        return phones
