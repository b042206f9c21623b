"""Session ingestion pipeline shared by the CLI and the HTTP service.

One session is a frame manifest (OCR'd overlay text per frame), a detection
file, and a GPS log. The pipeline normalizes overlay timestamps, repairs the
frame timeline, calibrates the overlay-to-UTC clock offset, geotags
detections, collapses them into clusters, reconciles repairs against the
registry, and commits everything as a single transaction.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Mapping, Optional

from .detection import (
    DEFAULT_CONFIDENCE_THRESHOLD,
    MalformedDetectionFile,
    SeverityThresholds,
    ingest_detections,
)
from .geotag_dedup import (
    DEFAULT_CORRIDOR_M,
    DedupConfig,
    MissingTimeline,
    deduplicate,
    geotag,
    reconcile,
)
from .gps_sync import (
    ClockOffset,
    GpsLogError,
    NoSamples,
    calibrate_offset,
    pair_calibration_samples,
    parse_gps_log,
)
from .overlay_time import (
    DEFAULT_FPS,
    FrameManifest,
    MalformedManifest,
    NoAnchor,
    build_timeline,
    read_frame_manifest,
)
from .store import (
    EVIDENCE_MAX_BYTES,
    EvidenceTooLarge,
    RegistryDelta,
    Session,
    Store,
    encode_evidence,
)


class DataError(ValueError):
    """An input part cannot be processed. Maps to HTTP 400 and CLI exit 3.

    ``part`` names the offending input ("frames", "detections", "gps");
    ``code`` is a stable machine-readable reason.
    """

    def __init__(self, part: str, code: str, message: str):
        super().__init__(message)
        self.part = part
        self.code = code
        self.message = message


@dataclass(frozen=True)
class PipelineConfig:
    nominal_fps: float = DEFAULT_FPS
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
    severity_thresholds: SeverityThresholds = SeverityThresholds()
    dedup: DedupConfig = DedupConfig()
    corridor_m: float = DEFAULT_CORRIDOR_M
    evidence_max_bytes: int = EVIDENCE_MAX_BYTES


@dataclass(frozen=True)
class SessionReport:
    """Outcome of one ingested session: registry delta plus diagnostics."""

    session_id: str
    offset_s: float
    delta: RegistryDelta
    frame_count: int
    repaired_frames: int
    detections_accepted: int
    detections_rejected: int
    dropped_low_confidence: int
    dropped_observations: int
    cluster_count: int
    missing_evidence: int
    oversize_evidence: int

    def as_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "offset_s": self.offset_s,
            "delta": self.delta.as_dict(),
            "diagnostics": {
                "frame_count": self.frame_count,
                "repaired_frames": self.repaired_frames,
                "detections_accepted": self.detections_accepted,
                "detections_rejected": self.detections_rejected,
                "dropped_low_confidence": self.dropped_low_confidence,
                "dropped_observations": self.dropped_observations,
                "cluster_count": self.cluster_count,
                "missing_evidence": self.missing_evidence,
                "oversize_evidence": self.oversize_evidence,
            },
        }


def compute_source_hash(frames: bytes, detections: bytes, gps: bytes,
                        gps_format: str, offset_s: Optional[float],
                        road_meta: Optional[Mapping[str, str]]) -> str:
    """Content hash identifying a session's inputs, path-independent."""
    h = hashlib.sha256()
    for label, payload in (("frames", frames), ("detections", detections), ("gps", gps)):
        h.update(label.encode("ascii"))
        h.update(len(payload).to_bytes(8, "big"))
        h.update(payload)
    h.update(gps_format.encode("ascii"))
    h.update(repr(offset_s).encode("ascii"))
    h.update(json.dumps(dict(road_meta or {}), sort_keys=True).encode("utf-8"))
    return h.hexdigest()


def _timeline_and_track(frames: bytes, gps: bytes, gps_format: str,
                        nominal_fps: float):
    try:
        manifest = read_frame_manifest(frames)
    except MalformedManifest as exc:
        raise DataError("frames", "MalformedManifest", str(exc)) from exc
    if not manifest.raws:
        raise DataError("frames", "EmptyManifest", "manifest contains no frames")
    try:
        timeline = build_timeline(manifest.raws, nominal_fps=nominal_fps)
    except NoAnchor as exc:
        raise DataError("frames", "NoAnchor", str(exc)) from exc
    try:
        track = parse_gps_log(gps, format=gps_format)
    except GpsLogError as exc:
        raise DataError("gps", type(exc).__name__, str(exc)) from exc
    return manifest, timeline, track


def _auto_offset(timeline, track) -> ClockOffset:
    """Median offset from parsed (non-repaired) frames paired by elapsed time."""
    repaired = set(timeline.repaired_frames)
    parsed_times = [ts for idx, ts in timeline.entries if idx not in repaired]
    paired_overlay, paired_utc = pair_calibration_samples(parsed_times, track)
    try:
        return calibrate_offset(paired_overlay, paired_utc)
    except NoSamples as exc:
        raise DataError("gps", "NoCalibrationSamples",
                        "no overlay timestamp pairs with a GPS fix; "
                        "pass an explicit offset") from exc


def calibrate_parts(frames: bytes, gps: bytes, *, gps_format: str = "csv",
                    nominal_fps: float = DEFAULT_FPS) -> float:
    """Offset in seconds for a manifest + GPS log pair, without a store."""
    _, timeline, track = _timeline_and_track(frames, gps, gps_format, nominal_fps)
    return _auto_offset(timeline, track).overlay_minus_utc


def _evidence_by_frame(manifest: FrameManifest,
                       evidence: Mapping[str, bytes],
                       max_bytes: int) -> tuple[dict[int, str], int, int]:
    """Base64 evidence per frame; counts of missing and oversize payloads."""
    frames_b64: dict[int, str] = {}
    missing = oversize = 0
    for frame_index, path in sorted(manifest.evidence_paths.items()):
        blob = evidence.get(path)
        if blob is None:
            missing += 1
            continue
        try:
            frames_b64[frame_index] = encode_evidence(blob, max_bytes)
        except EvidenceTooLarge:
            oversize += 1
    return frames_b64, missing, oversize


def ingest_session(store: Store,
                   frames: bytes,
                   detections: bytes,
                   gps: bytes,
                   *,
                   gps_format: str = "csv",
                   offset_s: Optional[float] = None,
                   evidence: Optional[Mapping[str, bytes]] = None,
                   road_meta: Optional[Mapping[str, str]] = None,
                   config: PipelineConfig = PipelineConfig(),
                   uploaded_at: Optional[datetime] = None) -> SessionReport:
    """Run the full pipeline for one session and commit it atomically.

    Raises DataError for unusable inputs and store.StorageFailure when the
    commit aborts; in the failure case the registry is unchanged.
    """
    source_hash = compute_source_hash(frames, detections, gps,
                                      gps_format, offset_s, road_meta)
    session_id = store.new_session_id(source_hash)

    manifest, timeline, track = _timeline_and_track(
        frames, gps, gps_format, config.nominal_fps)

    try:
        ingest = ingest_detections(detections, config.confidence_threshold)
    except MalformedDetectionFile as exc:
        raise DataError("detections", "MalformedDetectionFile", str(exc)) from exc
    if ingest.rejected and not ingest.detections and not ingest.dropped_low_confidence:
        raise DataError("detections", "AllRecordsRejected",
                        f"all {ingest.rejected_count} detection records rejected")

    if offset_s is not None:
        offset = ClockOffset(float(offset_s))
    else:
        offset = _auto_offset(timeline, track)

    frames_b64, missing_ev, oversize_ev = _evidence_by_frame(
        manifest, evidence or {}, config.evidence_max_bytes)

    try:
        tagged = geotag(ingest.detections, timeline, track, offset,
                        session_id=session_id,
                        thresholds=config.severity_thresholds,
                        evidence_paths=frames_b64)
    except MissingTimeline as exc:
        raise DataError("detections", "MissingTimeline", str(exc)) from exc

    clusters = deduplicate(tagged.observations, config.dedup)
    transitions = reconcile(store.all_records(), track, clusters,
                            corridor_m=config.corridor_m, cfg=config.dedup)

    session = Session(
        id=session_id,
        uploaded_at=uploaded_at or datetime.now(timezone.utc),
        frame_count=len(manifest.raws),
        detection_count=len(ingest.detections),
        cluster_count=len(clusters),
        calibrated_offset_s=offset.overlay_minus_utc,
    )
    delta = store.upsert_clusters(session, clusters, transitions,
                                  radius_m=config.dedup.radius_m,
                                  source_hash=source_hash,
                                  road_meta=road_meta)

    return SessionReport(
        session_id=session_id,
        offset_s=offset.overlay_minus_utc,
        delta=delta,
        frame_count=len(manifest.raws),
        repaired_frames=len(timeline.repaired_frames),
        detections_accepted=len(ingest.detections),
        detections_rejected=ingest.rejected_count,
        dropped_low_confidence=ingest.dropped_low_confidence,
        dropped_observations=tagged.dropped,
        cluster_count=len(clusters),
        missing_evidence=missing_ev,
        oversize_evidence=oversize_ev,
    )
