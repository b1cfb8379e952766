"""
Smartphone network sources for simulations.
"""

from quakeml.networks.base import NetworkInfo, NetworkSource
from quakeml.networks.csvfile import CsvRosterNetwork
from quakeml.networks.uniform import UniformBoxNetwork

__all__ = [
    "NetworkInfo",
    "NetworkSource",
    "CsvRosterNetwork",
    "UniformBoxNetwork",
]
