"""SQLite-backed pothole registry.

Persists sessions, per-frame observations, and canonical pothole records in
a single database file. Session upserts are atomic: either the session row,
all pothole changes, and all observation rows commit together, or nothing
does. Exports are deterministic: identical registry state serializes to
byte-identical GeoJSON.
"""
from __future__ import annotations

import base64
import binascii
import hashlib
import json
import math
import sqlite3
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .detection import Severity
from .geotag_dedup import (
    DEFAULT_DEDUP_RADIUS_M,
    PotholeCluster,
    StatusTransition,
    haversine_m,
)

EVIDENCE_MAX_BYTES = 256 * 1024

STATUSES = ("open", "fixed", "reopened")

# The full status machine. set_status and reconcile both go through it.
ALLOWED_TRANSITIONS = {
    ("open", "fixed"),
    ("fixed", "reopened"),
    ("reopened", "fixed"),
}

WORLD_BBOX = (-90.0, -180.0, 90.0, 180.0)

# Meters per degree of latitude, used only to size bbox prefilters.
_M_PER_DEG_LAT = 111194.9


class StoreError(Exception):
    """Base class for registry errors."""


class StorageFailure(StoreError):
    """A write transaction aborted; the registry is unchanged."""


class MalformedBBox(StoreError, ValueError):
    """Bounding box is not (min_lat, min_lon, max_lat, max_lon) with min <= max."""


class UnknownRecord(StoreError, KeyError):
    """No pothole record with the given id."""


class IllegalTransition(StoreError):
    """Requested status change is outside the status machine."""


class MalformedBase64(StoreError, ValueError):
    """Evidence payload is not valid Base64."""


class EvidenceTooLarge(StoreError, ValueError):
    """Evidence frame exceeds the per-frame size cap."""


@dataclass(frozen=True)
class PotholeRecord:
    """Canonical registry entry for one pothole."""

    id: str
    coordinate: tuple[float, float]
    severity: Severity
    status: str
    first_seen: datetime
    last_seen: datetime
    observation_count: int
    evidence_frame_b64: Optional[str] = None
    road_meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.observation_count < 1:
            raise ValueError("observation_count must be >= 1")


@dataclass(frozen=True)
class Session:
    """One ingested dashcam session."""

    id: str
    uploaded_at: datetime
    frame_count: int
    detection_count: int
    cluster_count: int
    calibrated_offset_s: float

    def __post_init__(self):
        if min(self.frame_count, self.detection_count, self.cluster_count) < 0:
            raise ValueError("session counts must be >= 0")


@dataclass(frozen=True)
class RegistryDelta:
    created: int = 0
    updated: int = 0
    fixed: int = 0
    reopened: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "created": self.created,
            "updated": self.updated,
            "fixed": self.fixed,
            "reopened": self.reopened,
        }


def isoformat_utc(dt: datetime) -> str:
    """UTC ISO 8601 with Z suffix; millisecond precision only when nonzero."""
    dt = dt.astimezone(timezone.utc)
    base = dt.strftime("%Y-%m-%dT%H:%M:%S")
    if dt.microsecond:
        return f"{base}.{dt.microsecond // 1000:03d}Z"
    return f"{base}Z"


def parse_utc(text: str) -> datetime:
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def encode_evidence(image: bytes, max_bytes: int = EVIDENCE_MAX_BYTES) -> str:
    """Base64 (RFC 4648 standard alphabet) text for an evidence frame."""
    if len(image) > max_bytes:
        raise EvidenceTooLarge(f"evidence frame {len(image)} bytes exceeds cap {max_bytes}")
    return base64.b64encode(image).decode("ascii")


def decode_evidence(text: str) -> bytes:
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError, ValueError) as exc:
        raise MalformedBase64(str(exc)) from exc


def pothole_id(coordinate: tuple[float, float], first_seen: datetime) -> str:
    """Deterministic record id from the founding observation.

    Derived from content, not from insertion order, so the same inputs
    ingested through any path mint the same id.
    """
    key = f"{coordinate[0]:.5f},{coordinate[1]:.5f},{isoformat_utc(first_seen)}"
    return "p" + hashlib.sha256(key.encode("ascii")).hexdigest()[:16]


def validate_bbox(bbox: Sequence[float]) -> tuple[float, float, float, float]:
    try:
        min_lat, min_lon, max_lat, max_lon = (float(v) for v in bbox)
    except (TypeError, ValueError) as exc:
        raise MalformedBBox(f"bbox must be 4 numbers: {bbox!r}") from exc
    for v in (min_lat, min_lon, max_lat, max_lon):
        if not math.isfinite(v):
            raise MalformedBBox("bbox values must be finite")
    if not (-90.0 <= min_lat <= max_lat <= 90.0):
        raise MalformedBBox(f"latitude range invalid: {min_lat}..{max_lat}")
    if not (-180.0 <= min_lon <= max_lon <= 180.0):
        raise MalformedBBox(f"longitude range invalid: {min_lon}..{max_lon}")
    return (min_lat, min_lon, max_lat, max_lon)


_SCHEMA = """
CREATE TABLE IF NOT EXISTS potholes (
    id TEXT PRIMARY KEY,
    lat REAL NOT NULL,
    lon REAL NOT NULL,
    severity INTEGER NOT NULL,
    status TEXT NOT NULL,
    first_seen TEXT NOT NULL,
    last_seen TEXT NOT NULL,
    observation_count INTEGER NOT NULL,
    evidence_frame_b64 TEXT,
    road_meta TEXT NOT NULL DEFAULT '{}'
);
CREATE INDEX IF NOT EXISTS idx_potholes_latlon ON potholes (lat, lon);
CREATE TABLE IF NOT EXISTS sessions (
    id TEXT PRIMARY KEY,
    uploaded_at TEXT NOT NULL,
    frame_count INTEGER NOT NULL,
    detection_count INTEGER NOT NULL,
    cluster_count INTEGER NOT NULL,
    calibrated_offset_s REAL NOT NULL,
    source_hash TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS observations (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    pothole_id TEXT NOT NULL REFERENCES potholes(id),
    session_id TEXT NOT NULL REFERENCES sessions(id),
    frame_index INTEGER NOT NULL,
    lat REAL NOT NULL,
    lon REAL NOT NULL,
    observed_at TEXT NOT NULL,
    severity INTEGER NOT NULL,
    confidence REAL NOT NULL
);
"""


class Store:
    """Single-file registry. Writes serialize through one lock.

    ``failpoint`` exists for crash-consistency tests: when set, it is
    invoked with a label at fixed points inside the upsert transaction and
    may raise to simulate a mid-commit failure.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.RLock()
        self.failpoint: Optional[Callable[[str], None]] = None
        self._conn = sqlite3.connect(str(self.path), check_same_thread=False)
        self._conn.isolation_level = None  # explicit BEGIN/COMMIT below
        with self._lock:
            self._conn.execute("PRAGMA journal_mode=WAL")
            self._conn.execute("PRAGMA foreign_keys=ON")
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- writes ---------------------------------------------------------

    def new_session_id(self, source_hash: str) -> str:
        """Content-derived session id; re-uploads get a sequence suffix."""
        with self._lock:
            row = self._conn.execute(
                "SELECT COUNT(*) FROM sessions WHERE source_hash = ?", (source_hash,)
            ).fetchone()
        n = int(row[0])
        stem = "s" + source_hash[:12]
        return stem if n == 0 else f"{stem}-{n + 1}"

    def _hit(self, label: str) -> None:
        if self.failpoint is not None:
            self.failpoint(label)

    def upsert_clusters(self,
                        session: Session,
                        clusters: Sequence[PotholeCluster],
                        transitions: Sequence[StatusTransition] = (),
                        *,
                        radius_m: float = DEFAULT_DEDUP_RADIUS_M,
                        source_hash: str = "",
                        road_meta: Optional[Mapping[str, str]] = None) -> RegistryDelta:
        """Apply one session atomically; returns the registry delta.

        Transitions (from reconcile) are applied first, then each cluster
        either updates the nearest existing record within ``radius_m`` or
        creates a new open record. The session's ``road_meta`` attaches to
        records this session creates. Any failure rolls the whole session
        back.
        """
        with self._lock:
            cur = self._conn.cursor()
            cur.execute("BEGIN IMMEDIATE")
            try:
                delta = self._apply_session(cur, session, clusters, transitions,
                                            radius_m, source_hash, road_meta)
                self._hit("pre-commit")
                cur.execute("COMMIT")
            except Exception as exc:
                cur.execute("ROLLBACK")
                if isinstance(exc, StoreError):
                    raise
                raise StorageFailure(f"session {session.id} aborted: {exc}") from exc
            return delta

    def _apply_session(self, cur, session, clusters, transitions,
                       radius_m, source_hash, road_meta) -> RegistryDelta:
        meta_json = json.dumps(
            {str(k): str(v) for k, v in (road_meta or {}).items()}, sort_keys=True)
        cur.execute(
            "INSERT INTO sessions (id, uploaded_at, frame_count, detection_count,"
            " cluster_count, calibrated_offset_s, source_hash)"
            " VALUES (?, ?, ?, ?, ?, ?, ?)",
            (session.id, isoformat_utc(session.uploaded_at), session.frame_count,
             session.detection_count, session.cluster_count,
             session.calibrated_offset_s, source_hash))
        self._hit("session-row")

        fixed = reopened = 0
        reopened_ids: set[str] = set()
        for tr in transitions:
            if (tr.old_status, tr.new_status) not in ALLOWED_TRANSITIONS:
                raise IllegalTransition(f"{tr.old_status} -> {tr.new_status}")
            cur.execute(
                "UPDATE potholes SET status = ? WHERE id = ? AND status = ?",
                (tr.new_status, tr.record_id, tr.old_status))
            if cur.rowcount != 1:
                raise StorageFailure(
                    f"transition for {tr.record_id} no longer applies")
            if tr.new_status == "fixed":
                fixed += 1
            else:
                reopened += 1
                reopened_ids.add(tr.record_id)
            self._hit("transition-row")

        created = updated = 0
        for cluster in clusters:
            record_id = self._match_record(cur, cluster.anchor, radius_m)
            if record_id is None:
                record_id = pothole_id(cluster.anchor, cluster.first_seen)
                cur.execute(
                    "INSERT INTO potholes (id, lat, lon, severity, status,"
                    " first_seen, last_seen, observation_count,"
                    " evidence_frame_b64, road_meta)"
                    " VALUES (?, ?, ?, ?, 'open', ?, ?, ?, ?, ?)",
                    (record_id, cluster.anchor[0], cluster.anchor[1],
                     int(cluster.representative_severity),
                     isoformat_utc(cluster.first_seen),
                     isoformat_utc(cluster.last_seen),
                     len(cluster.members), cluster.best_evidence, meta_json))
                created += 1
            else:
                row = cur.execute(
                    "SELECT severity, first_seen, last_seen, observation_count,"
                    " evidence_frame_b64 FROM potholes WHERE id = ?",
                    (record_id,)).fetchone()
                severity = max(int(row[0]), int(cluster.representative_severity))
                first_seen = min(parse_utc(row[1]), cluster.first_seen)
                last_seen = max(parse_utc(row[2]), cluster.last_seen)
                count = int(row[3]) + len(cluster.members)
                evidence = cluster.best_evidence or row[4]
                cur.execute(
                    "UPDATE potholes SET severity = ?, first_seen = ?,"
                    " last_seen = ?, observation_count = ?, evidence_frame_b64 = ?"
                    " WHERE id = ?",
                    (severity, isoformat_utc(first_seen), isoformat_utc(last_seen),
                     count, evidence, record_id))
                if record_id not in reopened_ids:
                    updated += 1
            for obs in cluster.members:
                cur.execute(
                    "INSERT INTO observations (pothole_id, session_id, frame_index,"
                    " lat, lon, observed_at, severity, confidence)"
                    " VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                    (record_id, session.id, obs.frame_index, obs.coordinate[0],
                     obs.coordinate[1], isoformat_utc(obs.observed_at_utc),
                     int(obs.severity), obs.confidence))
            self._hit("pothole-row")
        return RegistryDelta(created=created, updated=updated,
                             fixed=fixed, reopened=reopened)

    def _match_record(self, cur, anchor: tuple[float, float],
                      radius_m: float) -> Optional[str]:
        """Nearest existing record within radius_m of anchor, or None."""
        dlat = radius_m / _M_PER_DEG_LAT * 1.5
        cos_lat = max(math.cos(math.radians(anchor[0])), 1e-6)
        dlon = radius_m / (_M_PER_DEG_LAT * cos_lat) * 1.5
        rows = cur.execute(
            "SELECT id, lat, lon FROM potholes"
            " WHERE lat BETWEEN ? AND ? AND lon BETWEEN ? AND ? ORDER BY id",
            (anchor[0] - dlat, anchor[0] + dlat,
             anchor[1] - dlon, anchor[1] + dlon)).fetchall()
        best: tuple[float, str] | None = None
        for rid, lat, lon in rows:
            d = haversine_m(anchor, (lat, lon))
            if d <= radius_m and (best is None or (d, rid) < best):
                best = (d, rid)
        return best[1] if best else None

    def set_status(self, record_id: str, new_status: str) -> PotholeRecord:
        """Manual status change through the same machine as reconcile."""
        if new_status not in STATUSES:
            raise IllegalTransition(f"unknown status {new_status!r}")
        with self._lock:
            cur = self._conn.cursor()
            cur.execute("BEGIN IMMEDIATE")
            try:
                row = cur.execute(
                    "SELECT status FROM potholes WHERE id = ?",
                    (record_id,)).fetchone()
                if row is None:
                    raise UnknownRecord(record_id)
                old_status = row[0]
                if (old_status, new_status) not in ALLOWED_TRANSITIONS:
                    raise IllegalTransition(f"{old_status} -> {new_status}")
                cur.execute("UPDATE potholes SET status = ? WHERE id = ?",
                            (new_status, record_id))
                cur.execute("COMMIT")
            except Exception:
                cur.execute("ROLLBACK")
                raise
        return self.get_record(record_id)

    # -- reads ----------------------------------------------------------

    def get_record(self, record_id: str) -> PotholeRecord:
        with self._lock:
            row = self._conn.execute(
                "SELECT id, lat, lon, severity, status, first_seen, last_seen,"
                " observation_count, evidence_frame_b64, road_meta"
                " FROM potholes WHERE id = ?", (record_id,)).fetchone()
        if row is None:
            raise UnknownRecord(record_id)
        return _record_from_row(row)

    def query(self,
              bbox: Sequence[float],
              date_range: tuple[Optional[datetime], Optional[datetime]] | None = None,
              status_filter: Optional[Iterable[str]] = None,
              road_type: Optional[str] = None) -> list[PotholeRecord]:
        """Records inside bbox satisfying every supplied filter.

        date_range uses interval-intersection semantics: a record matches
        when [first_seen, last_seen] overlaps [from, to]. Results are
        ordered by last_seen descending, id ascending.
        """
        min_lat, min_lon, max_lat, max_lon = validate_bbox(bbox)
        statuses = None
        if status_filter is not None:
            statuses = set(status_filter)
            unknown = statuses - set(STATUSES)
            if unknown:
                raise ValueError(f"unknown status filter {sorted(unknown)}")
        with self._lock:
            rows = self._conn.execute(
                "SELECT id, lat, lon, severity, status, first_seen, last_seen,"
                " observation_count, evidence_frame_b64, road_meta FROM potholes"
                " WHERE lat BETWEEN ? AND ? AND lon BETWEEN ? AND ?"
                " ORDER BY last_seen DESC, id ASC",
                (min_lat, max_lat, min_lon, max_lon)).fetchall()
        records = []
        for row in rows:
            record = _record_from_row(row)
            if statuses is not None and record.status not in statuses:
                continue
            if date_range is not None:
                since, until = date_range
                if since is not None and record.last_seen < since:
                    continue
                if until is not None and record.first_seen > until:
                    continue
            if road_type is not None and record.road_meta.get("road_type") != road_type:
                continue
            records.append(record)
        return records

    def all_records(self) -> list[PotholeRecord]:
        return self.query(WORLD_BBOX)

    def set_road_meta(self, record_id: str, road_meta: dict[str, str]) -> PotholeRecord:
        """Attach free-form road metadata (contractor, road type, built date)."""
        meta = {str(k): str(v) for k, v in road_meta.items()}
        with self._lock:
            cur = self._conn.execute(
                "UPDATE potholes SET road_meta = ? WHERE id = ?",
                (json.dumps(meta, sort_keys=True), record_id))
            self._conn.commit()
            if cur.rowcount != 1:
                raise UnknownRecord(record_id)
        return self.get_record(record_id)

    def session_count(self) -> int:
        with self._lock:
            return int(self._conn.execute("SELECT COUNT(*) FROM sessions").fetchone()[0])


def _record_from_row(row) -> PotholeRecord:
    return PotholeRecord(
        id=row[0],
        coordinate=(row[1], row[2]),
        severity=Severity(int(row[3])),
        status=row[4],
        first_seen=parse_utc(row[5]),
        last_seen=parse_utc(row[6]),
        observation_count=int(row[7]),
        evidence_frame_b64=row[8],
        road_meta=json.loads(row[9]) if row[9] else {},
    )


# -- GeoJSON ------------------------------------------------------------

def record_to_feature(record: PotholeRecord) -> dict:
    """RFC 7946 Point Feature; coordinates are [lon, lat]."""
    return {
        "type": "Feature",
        "geometry": {
            "type": "Point",
            "coordinates": [record.coordinate[1], record.coordinate[0]],
        },
        "properties": {
            "id": record.id,
            "severity": record.severity.label,
            "status": record.status,
            "first_seen": isoformat_utc(record.first_seen),
            "last_seen": isoformat_utc(record.last_seen),
            "observation_count": record.observation_count,
            "road_meta": record.road_meta,
            "evidence_frame_b64": record.evidence_frame_b64,
        },
    }


def feature_collection(records: Sequence[PotholeRecord]) -> dict:
    return {
        "type": "FeatureCollection",
        "features": [record_to_feature(r) for r in records],
    }


def geojson_dumps(obj: dict) -> str:
    """The one serializer used by both the export file and the HTTP body.

    Sorted keys and fixed separators make equal registry states serialize
    to byte-identical text.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
