"""Mobility pipeline from raw device sightings to a social distancing index."""

from .activity import ActivityClusterer, ActivityProfiler, ClusterConfig, HomeWorkConfig, dbscan_haversine
from .cases import CaseTable, join_with_sdi, parse_cases
from .geo import GeoPoint, Zone, ZoneIndex, haversine_distance, load_zones, locate, point_in_polygon
from .ingest import CleaningConfig, SightingCleaner, clean, parse_sightings
from .metrics import compute_benchmark, compute_metrics, trip_increase_composition
from .phase import PhaseDetector, PhaseReport, RateOfChange, detect_phases, phase_report, roc, welch_t_test
from .pipeline import PipelineConfig, PipelineResult, run_pipeline
from .sdi import MovingAverage, SdiWeights, SocialDistancingIndex, moving_average, sdi_score
from .synth import Scenario, generate, load_scenario, paper_shape_scenario
from .trips import TripConfig, TripSegmenter, filter_short, segment
from .weights import CalibrationError, DeviceWeighter, TripRateCalibrator

__version__ = "0.1.0"

__all__ = [
    "ActivityClusterer", "ActivityProfiler", "CalibrationError", "CaseTable", "CleaningConfig", "ClusterConfig",
    "DeviceWeighter", "GeoPoint", "HomeWorkConfig", "MovingAverage", "PhaseDetector", "PhaseReport",
    "PipelineConfig", "PipelineResult", "RateOfChange", "Scenario", "SdiWeights", "SightingCleaner",
    "SocialDistancingIndex", "TripConfig", "TripRateCalibrator", "TripSegmenter", "Zone", "ZoneIndex", "clean",
    "compute_benchmark", "compute_metrics", "dbscan_haversine", "detect_phases", "filter_short", "generate",
    "haversine_distance", "join_with_sdi", "load_scenario", "load_zones", "locate", "moving_average",
    "paper_shape_scenario", "parse_cases", "parse_sightings", "phase_report", "point_in_polygon", "roc",
    "run_pipeline", "sdi_score", "segment", "trip_increase_composition", "welch_t_test",
]
