"""
Base class for smartphone network sources.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from quakeml.detector import Smartphone


@dataclass(frozen=True)
class NetworkInfo:
    """Summary of a loaded network."""

    name: str
    kind: str
    count: int
    active: int


class NetworkSource(ABC):
    """
    Abstract base class for everything that yields a smartphone roster.

    Sources (uniform placement, roster files, ...) inherit from this class
    and implement ``kind`` and ``_generate``.
    """

    def __init__(self, name: str = "network"):
        self.name = name
        self._phones: list[Smartphone] | None = None

    @property
    @abstractmethod
    def kind(self) -> str:
        """Return the placement kind (e.g. 'uniform', 'file')."""

    @abstractmethod
    def _generate(self, rng: np.random.Generator) -> list[Smartphone]:
        """Produce the roster."""

    def load(self, rng: np.random.Generator | None = None) -> list[Smartphone]:
        """
        Produce the roster once and cache it.

        Args:
            rng: Random generator for sources that place phones at random.

        Returns:
            The smartphones of the network.
        """
        if self._phones is None:
            self._phones = self._generate(rng or np.random.default_rng())
        return self._phones

    @property
    def info(self) -> NetworkInfo:
        phones = self._phones or []
        return NetworkInfo(
            name=self.name,
            kind=self.kind,
            count=len(phones),
            active=sum(p.active for p in phones),
        )

    def __str__(self) -> str:
        return f"{self.kind}://{self.name}"
