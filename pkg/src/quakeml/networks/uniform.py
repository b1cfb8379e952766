"""
Uniform placement of smartphones in a latitude/longitude box.
"""

from __future__ import annotations

import numpy as np
import structlog

from quakeml.detector import Smartphone
from quakeml.errors import InvalidInputError
from quakeml.geo import GeoPoint
from quakeml.networks.base import NetworkSource

logger = structlog.get_logger()


class UniformBoxNetwork(NetworkSource):
    """
    ``count`` active phones placed uniformly in a box, ids ``00000``, ``00001``...

    Example:
        ```python
        network = UniformBoxNetwork(1000, (-12.39, -11.74), (-77.17, -76.66))
        phones = network.load(np.random.default_rng(7))
        ```
    """

    def __init__(
        self,
        count: int,
        lat_bounds: tuple[float, float],
        lon_bounds: tuple[float, float],
        name: str = "uniform-box",
    ):
        super().__init__(name)
        if count < 1:
            raise InvalidInputError(f"network needs at least one phone, got {count}")
        if lat_bounds[0] > lat_bounds[1] or lon_bounds[0] > lon_bounds[1]:
            raise InvalidInputError(f"box not ordered: {lat_bounds}, {lon_bounds}")
        self.count = count
        self.lat_bounds = lat_bounds
        self.lon_bounds = lon_bounds

    @property
    def kind(self) -> str:
        return "uniform"

    def _generate(self, rng: np.random.Generator) -> list[Smartphone]:
        lat = rng.uniform(*self.lat_bounds, size=self.count)
        lon = rng.uniform(*self.lon_bounds, size=self.count)
        width = max(5, len(str(self.count - 1)))
        logger.debug("Placed smartphones", count=self.count, box=(self.lat_bounds, self.lon_bounds))
        return [
            Smartphone(f"{i:0{width}d}", GeoPoint(float(la), float(lo)))
            for i, (la, lo) in enumerate(zip(lat, lon))
        ]
