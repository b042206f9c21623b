"""Geotagging, Haversine deduplication, and repair reconciliation.

Fuses the frame timeline, GPS track, and detections into geotagged
observations, then collapses the per-frame redundancy (a pothole filmed at
30 fps shows up in many consecutive frames) into canonical clusters with a
greedy first-fit pass over Haversine distance. A second pass reconciles an
incoming session against the existing registry: potholes the new track
covered but did not re-detect transition to fixed, fixed potholes with a
fresh in-radius detection reopen.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Mapping, Optional, Sequence, TYPE_CHECKING

from .detection import Detection, Severity, SeverityThresholds, assess_severity
from .gps_sync import ClockOffset, GpsTrack, LocateError, locate, overlay_to_utc
from .overlay_time import FrameTimeline

if TYPE_CHECKING:
    from .store import PotholeRecord

EARTH_RADIUS_M = 6371000.0

DEFAULT_DEDUP_RADIUS_M = 2.5
DEFAULT_CORRIDOR_M = 10.0

# Step used when densifying track segments for corridor coverage checks.
COVERAGE_STEP_S = 1.0


class MissingTimeline(ValueError):
    """A detection references a frame the timeline does not cover."""


@dataclass(frozen=True)
class DedupConfig:
    radius_m: float = DEFAULT_DEDUP_RADIUS_M
    earth_radius_m: float = EARTH_RADIUS_M

    def __post_init__(self):
        if self.radius_m <= 0:
            raise ValueError("radius_m must be positive")


@dataclass(frozen=True)
class PotholeObservation:
    """One geotagged detection, before deduplication."""

    session_id: str
    frame_index: int
    coordinate: tuple[float, float]
    observed_at_utc: datetime
    severity: Severity
    confidence: float
    evidence_frame: Optional[str] = None


@dataclass
class PotholeCluster:
    """Canonical pothole candidate: all observations within one dedup radius.

    The anchor is the first observation's coordinate and never moves, which
    keeps clustering deterministic and idempotent.
    """

    anchor: tuple[float, float]
    members: list[PotholeObservation] = field(default_factory=list)

    @property
    def representative_severity(self) -> Severity:
        return max(m.severity for m in self.members)

    @property
    def first_seen(self) -> datetime:
        return min(m.observed_at_utc for m in self.members)

    @property
    def last_seen(self) -> datetime:
        return max(m.observed_at_utc for m in self.members)

    @property
    def best_evidence(self) -> Optional[str]:
        """Evidence reference of the highest-confidence member that has one."""
        with_evidence = [m for m in self.members if m.evidence_frame is not None]
        if not with_evidence:
            return None
        return max(with_evidence, key=lambda m: m.confidence).evidence_frame

    @property
    def anchor_frame_index(self) -> int:
        return self.members[0].frame_index


@dataclass(frozen=True)
class GeotagResult:
    observations: tuple[PotholeObservation, ...]
    dropped: int


def haversine_m(a: tuple[float, float], b: tuple[float, float],
                earth_radius_m: float = EARTH_RADIUS_M) -> float:
    """Great-circle distance in meters, standard haversine formula."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * earth_radius_m * math.asin(min(1.0, math.sqrt(h)))


def geotag(detections: Sequence[Detection],
           timeline: FrameTimeline,
           track: GpsTrack,
           offset: ClockOffset,
           *,
           session_id: str = "",
           thresholds: SeverityThresholds = SeverityThresholds(),
           evidence_paths: Mapping[int, str] | None = None) -> GeotagResult:
    """Attach a coordinate and UTC instant to every detection that locates.

    Detections whose frame time falls outside the usable track (or inside a
    gap too wide to interpolate) are dropped and counted. A detection whose
    frame is absent from the timeline altogether raises MissingTimeline:
    that is a broken session, not a locator miss.
    """
    evidence_paths = evidence_paths or {}
    observations: list[PotholeObservation] = []
    dropped = 0
    for det in detections:
        if det.frame_index not in timeline:
            raise MissingTimeline(f"frame {det.frame_index} not in timeline")
        frame_time = timeline.time_for(det.frame_index)
        try:
            coordinate = locate(track, offset, frame_time)
        except LocateError:
            dropped += 1
            continue
        observations.append(PotholeObservation(
            session_id=session_id,
            frame_index=det.frame_index,
            coordinate=coordinate,
            observed_at_utc=overlay_to_utc(frame_time, offset),
            severity=assess_severity(det, thresholds),
            confidence=det.confidence,
            evidence_frame=evidence_paths.get(det.frame_index),
        ))
    return GeotagResult(observations=tuple(observations), dropped=dropped)


def deduplicate(observations: Sequence[PotholeObservation],
                cfg: DedupConfig = DedupConfig()) -> list[PotholeCluster]:
    """Greedy single-pass clustering over the dedup radius.

    Observations are visited in (observed_at_utc, frame_index) order; each
    joins the first existing cluster whose anchor is within ``cfg.radius_m``,
    else founds a new cluster anchored at its own coordinate.
    """
    ordered = sorted(observations, key=lambda o: (o.observed_at_utc, o.frame_index))
    clusters: list[PotholeCluster] = []
    for obs in ordered:
        for cluster in clusters:
            if haversine_m(cluster.anchor, obs.coordinate, cfg.earth_radius_m) <= cfg.radius_m:
                cluster.members.append(obs)
                break
        else:
            clusters.append(PotholeCluster(anchor=obs.coordinate, members=[obs]))
    return clusters


@dataclass(frozen=True)
class StatusTransition:
    """A registry status change produced by reconciliation."""

    record_id: str
    old_status: str
    new_status: str


def track_coverage_points(track: GpsTrack,
                          step_s: float = COVERAGE_STEP_S) -> list[tuple[float, float]]:
    """Track densified to roughly one point per second.

    Fix positions plus linearly interpolated intermediate points; exact
    segment geometry is unnecessary at corridor widths of a few meters
    with 1 Hz logging.
    """
    points: list[tuple[float, float]] = []
    fixes = track.fixes
    for i, fix in enumerate(fixes):
        points.append((fix.lat, fix.lon))
        if i + 1 == len(fixes):
            break
        nxt = fixes[i + 1]
        span = (nxt.time_utc - fix.time_utc).total_seconds()
        steps = int(span // step_s)
        for k in range(1, steps):
            frac = k * step_s / span
            points.append((fix.lat + frac * (nxt.lat - fix.lat),
                           fix.lon + frac * (nxt.lon - fix.lon)))
    return points


def reconcile(existing: Sequence["PotholeRecord"],
              new_track: GpsTrack,
              new_clusters: Sequence[PotholeCluster],
              corridor_m: float = DEFAULT_CORRIDOR_M,
              cfg: DedupConfig = DedupConfig()) -> list[StatusTransition]:
    """Status transitions implied by a new session against the registry.

    An open (or reopened) pothole becomes fixed when the new track passed
    within ``corridor_m`` of it and no new cluster landed within the dedup
    radius: the road was re-surveyed and the pothole is gone. A fixed
    pothole with a new in-radius cluster becomes reopened.
    """
    if corridor_m <= 0:
        raise ValueError("corridor_m must be positive")
    coverage = track_coverage_points(new_track) if len(new_track) else []
    transitions: list[StatusTransition] = []
    for record in existing:
        redetected = any(
            haversine_m(cluster.anchor, record.coordinate, cfg.earth_radius_m) <= cfg.radius_m
            for cluster in new_clusters
        )
        if record.status in ("open", "reopened"):
            if redetected:
                continue  # still there; upsert refreshes last_seen
            covered = any(
                haversine_m(point, record.coordinate, cfg.earth_radius_m) <= corridor_m
                for point in coverage
            )
            if covered:
                transitions.append(StatusTransition(record.id, record.status, "fixed"))
        elif record.status == "fixed" and redetected:
            transitions.append(StatusTransition(record.id, record.status, "reopened"))
    return transitions
