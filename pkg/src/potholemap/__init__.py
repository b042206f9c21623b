"""Dashcam pothole sessions to a deduplicated, geotagged registry.

Pipeline stages, each usable on its own:

- overlay_time: OCR'd overlay text to a repaired per-frame timeline
- gps_sync: GPS logs, clock-offset calibration, frame-to-coordinate lookup
- detection: detection file ingest and severity assessment
- geotag_dedup: geotagging, Haversine clustering, repair reconciliation
- store: transactional registry with GeoJSON export
- pipeline: one-call session ingestion
- service: HTTP API
- report: CSV plus figure rendering
"""
from .detection import (
    BoundingBox,
    Detection,
    Severity,
    SeverityThresholds,
    assess_severity,
    ingest_detections,
)
from .geotag_dedup import (
    DedupConfig,
    PotholeCluster,
    PotholeObservation,
    deduplicate,
    geotag,
    haversine_m,
    reconcile,
)
from .gps_sync import (
    ClockOffset,
    GpsFix,
    GpsTrack,
    calibrate_offset,
    locate,
    parse_gps_log,
    round_coord,
)
from .overlay_time import (
    CanonicalTimestamp,
    FrameTimeline,
    RawOverlayText,
    build_timeline,
    normalize_overlay_text,
    read_frame_manifest,
)
from .pipeline import PipelineConfig, SessionReport, ingest_session
from .service import ApiConfig, create_app
from .store import (
    PotholeRecord,
    RegistryDelta,
    Session,
    Store,
    decode_evidence,
    encode_evidence,
    feature_collection,
    geojson_dumps,
)

__version__ = "0.1.0"

__all__ = [
    "ApiConfig",
    "BoundingBox",
    "CanonicalTimestamp",
    "ClockOffset",
    "DedupConfig",
    "Detection",
    "FrameTimeline",
    "GpsFix",
    "GpsTrack",
    "PipelineConfig",
    "PotholeCluster",
    "PotholeObservation",
    "PotholeRecord",
    "RawOverlayText",
    "RegistryDelta",
    "Session",
    "SessionReport",
    "Severity",
    "SeverityThresholds",
    "Store",
    "assess_severity",
    "build_timeline",
    "calibrate_offset",
    "create_app",
    "decode_evidence",
    "deduplicate",
    "encode_evidence",
    "feature_collection",
    "geojson_dumps",
    "geotag",
    "haversine_m",
    "ingest_detections",
    "ingest_session",
    "locate",
    "normalize_overlay_text",
    "parse_gps_log",
    "read_frame_manifest",
    "reconcile",
    "round_coord",
    "__version__",
]
