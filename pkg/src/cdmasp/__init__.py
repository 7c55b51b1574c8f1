"""CDMA multiuser detection by Gaussian-approximated survey propagation."""

__version__ = "0.1.0"

from .analysis import (
    FixedPointSummary,
    StabilityEntry,
    StabilityReport,
    fixed_point_summary,
    stability_scan,
    two_replica_probe,
)
from .detector import (
    DetectionResult,
    DetectorConfig,
    DetectorState,
    bp_detect,
    detect,
    horizontal_update,
    init_state,
    matched_filter,
    vertical_update,
)
from .exceptions import (
    CapacityError,
    CdmaspError,
    ConsistencyError,
    DataError,
    DimensionError,
    EmptySummaryError,
    ParameterError,
)
from .estimators import BPDetector, ExhaustiveMPMDetector, MatchedFilterDetector, SPDetector
from .model import (
    Instance,
    PosteriorQuery,
    exact_cavity_field,
    exhaustive_mpm,
    generate_instance,
    log_likelihood,
)
from .quadrature import QuadratureRule, TiltedMomentRequest, build_rule, tilted_moments
from .trace import MacroTrace, record_trace

__all__ = [
    "BPDetector", "CapacityError", "CdmaspError", "ConsistencyError", "DataError", "DimensionError",
    "EmptySummaryError", "ParameterError", "DetectionResult", "DetectorConfig", "DetectorState", "ExhaustiveMPMDetector",
    "FixedPointSummary", "Instance", "MacroTrace", "MatchedFilterDetector", "PosteriorQuery",
    "QuadratureRule", "SPDetector", "StabilityEntry", "StabilityReport", "TiltedMomentRequest",
    "bp_detect", "build_rule", "detect", "exact_cavity_field", "exhaustive_mpm", "fixed_point_summary",
    "generate_instance", "horizontal_update", "init_state", "log_likelihood", "matched_filter",
    "record_trace", "stability_scan", "tilted_moments", "two_replica_probe", "vertical_update",
]
