"""
QuakeML - classify smartphone-network earthquake detections as true or false.

A detection's trigger times are fitted to a travel-time model by maximum
likelihood, and the residual variance is tested against a calibrated null
value at two wave speeds.
"""

__version__ = "0.1.0"

import logging

import structlog

from quakeml.detector import Detection, DetectorConfig, Smartphone, StreamingDetector, detect
from quakeml.errors import (
    DegenerateGeometryError,
    InsufficientDataError,
    InvalidInputError,
    NonConvergenceError,
    QuakeMLError,
    TriggerFileError,
)
from quakeml.estimation import (
    EstimatorConfig,
    FitResult,
    Hypocenter,
    Trigger,
    estimate_hypocenter,
    hessian_confidence,
)
from quakeml.geo import PRIMARY_WAVE, SECONDARY_WAVE, GeoPoint, WaveSpeed
from quakeml.hypothesis import Classification, TestSpec, Verdict, classify, run_test
from quakeml.io import read_roster, read_triggers, write_triggers
from quakeml.simulate import CalibrationReport, CalibrationStudy, calibrate_delta, run_calibration

# below WARNING stays silent unless the application configured structlog;
# the CLI installs its own configuration
if not structlog.is_configured():
    structlog.configure(wrapper_class=structlog.make_filtering_bound_logger(logging.WARNING))

__all__ = [
    "CalibrationReport",
    "CalibrationStudy",
    "Classification",
    "DegenerateGeometryError",
    "Detection",
    "DetectorConfig",
    "EstimatorConfig",
    "FitResult",
    "GeoPoint",
    "Hypocenter",
    "InsufficientDataError",
    "InvalidInputError",
    "NonConvergenceError",
    "PRIMARY_WAVE",
    "QuakeMLError",
    "SECONDARY_WAVE",
    "Smartphone",
    "StreamingDetector",
    "TestSpec",
    "Trigger",
    "TriggerFileError",
    "Verdict",
    "WaveSpeed",
    "calibrate_delta",
    "classify",
    "detect",
    "estimate_hypocenter",
    "hessian_confidence",
    "read_roster",
    "read_triggers",
    "run_calibration",
    "run_test",
    "write_triggers",
]
