"""GPS log parsing, overlay-clock calibration, and track interpolation.

The external GPS logger records UTC-stamped WGS84 fixes while the dashcam
overlay runs on its own (usually local-time) clock. This module parses the
logs, measures the overlay-minus-UTC offset, and resolves any frame
timestamp to a coordinate by linear interpolation along the track. All
returned coordinates are rounded half-up to 5 decimal places to absorb
GPS signal jitter.
"""
from __future__ import annotations

import csv
import io
import math
import statistics
import xml.etree.ElementTree as ET
from bisect import bisect_left
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

from .overlay_time import CanonicalTimestamp

GPS_CSV_FIELDS = ("time_utc", "lat", "lon")

# Clamp window for queries just outside the track span, and the widest
# fix-to-fix gap interpolation is trusted across.
ENDPOINT_CLAMP_S = 1.0
MAX_GAP_S = 5.0

COORD_DECIMALS = 5
_COORD_GRID = Decimal("0.00001")
# Pre-rounding grid that absorbs binary float noise (~1e-16 relative)
# before the half-up decision at the 5th decimal.
_PREROUND_GRID = Decimal("0.0000000001")


class GpsLogError(ValueError):
    """Base class for GPS log ingest failures."""


class MalformedLog(GpsLogError):
    """A log record could not be read."""


class EmptyTrack(GpsLogError):
    """The log contained zero valid fixes."""


class NoSamples(ValueError):
    """Offset calibration was given no paired samples."""


class LocateError(ValueError):
    """Base class for track lookup failures."""


class OutsideTrack(LocateError):
    """Query time more than the clamp window beyond either track end."""


class GapTooLarge(LocateError):
    """Bracketing fixes too far apart to interpolate between."""


@dataclass(frozen=True)
class GpsFix:
    """A timed WGS84 position from the external GPS logger."""

    time_utc: datetime
    lat: float
    lon: float

    def __post_init__(self):
        if self.time_utc.tzinfo is None:
            raise ValueError("GpsFix.time_utc must be timezone-aware")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class GpsTrack:
    """Fixes sorted by time, strictly increasing after ingest dedup."""

    fixes: tuple[GpsFix, ...]

    def __len__(self) -> int:
        return len(self.fixes)

    @property
    def start(self) -> datetime:
        return self.fixes[0].time_utc

    @property
    def end(self) -> datetime:
        return self.fixes[-1].time_utc


@dataclass(frozen=True)
class ClockOffset:
    """Signed overlay-clock-minus-UTC offset in seconds."""

    overlay_minus_utc: float

    def __post_init__(self):
        if not math.isfinite(self.overlay_minus_utc):
            raise ValueError("offset must be finite")


ZERO_OFFSET = ClockOffset(0.0)


def round_coord(value: float) -> float:
    """Round a coordinate half-up (ties away from zero) to 5 decimals."""
    pre = Decimal(repr(float(value))).quantize(_PREROUND_GRID, rounding=ROUND_HALF_UP)
    return float(pre.quantize(_COORD_GRID, rounding=ROUND_HALF_UP))


def parse_gps_log(data: bytes, format: str = "csv") -> GpsTrack:
    """Parse a GPS log into a track.

    ``format`` is "csv" (header time_utc,lat,lon with ISO 8601 times) or
    "gpx" (trkpt lat/lon attributes with a <time> child). Fixes come back
    sorted by time with duplicate-timestamp fixes collapsed to the first
    occurrence.

    Raises MalformedLog on an unreadable record and EmptyTrack when no
    valid fixes remain.
    """
    if format == "csv":
        fixes = _parse_csv(data)
    elif format == "gpx":
        fixes = _parse_gpx(data)
    else:
        raise ValueError(f"unknown GPS log format: {format!r}")

    fixes.sort(key=lambda f: f.time_utc)
    deduped: list[GpsFix] = []
    for fix in fixes:
        if deduped and fix.time_utc == deduped[-1].time_utc:
            continue
        deduped.append(fix)
    if not deduped:
        raise EmptyTrack("no valid fixes in log")
    return GpsTrack(fixes=tuple(deduped))


def _parse_time_utc(text: str) -> datetime:
    parsed = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def _parse_csv(data: bytes) -> list[GpsFix]:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedLog(f"log is not UTF-8: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != list(GPS_CSV_FIELDS):
        raise MalformedLog(f"CSV header must be {','.join(GPS_CSV_FIELDS)}")
    fixes = []
    for line_no, row in enumerate(reader, start=2):
        try:
            fixes.append(GpsFix(time_utc=_parse_time_utc(row["time_utc"]),
                                lat=float(row["lat"]), lon=float(row["lon"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedLog(f"CSV line {line_no}: {exc}") from exc
    return fixes


def _parse_gpx(data: bytes) -> list[GpsFix]:
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise MalformedLog(f"GPX parse error: {exc}") from exc
    fixes = []
    for element in root.iter():
        if not element.tag.endswith("trkpt"):
            continue
        time_el = next((child for child in element if child.tag.endswith("}time") or child.tag == "time"), None)
        try:
            if time_el is None or time_el.text is None:
                raise ValueError("trkpt missing <time>")
            fixes.append(GpsFix(time_utc=_parse_time_utc(time_el.text),
                                lat=float(element.attrib["lat"]),
                                lon=float(element.attrib["lon"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedLog(f"GPX trkpt: {exc}") from exc
    return fixes


def calibrate_offset(overlay_samples: Sequence[CanonicalTimestamp],
                     utc_samples: Sequence[datetime]) -> ClockOffset:
    """Median of per-pair (overlay - utc) differences, in seconds.

    The median keeps single OCR outliers from skewing the calibration.
    """
    if len(overlay_samples) != len(utc_samples):
        raise ValueError("overlay and utc sample lists must pair up")
    if not overlay_samples:
        raise NoSamples("no paired samples to calibrate from")
    diffs = [
        overlay.to_seconds() - _utc_seconds(utc)
        for overlay, utc in zip(overlay_samples, utc_samples)
    ]
    return ClockOffset(float(statistics.median(diffs)))


def _utc_seconds(dt: datetime) -> float:
    if dt.tzinfo is None:
        raise ValueError("UTC samples must be timezone-aware")
    return dt.timestamp()


def locate(track: GpsTrack, offset: ClockOffset,
           frame_time: CanonicalTimestamp) -> tuple[float, float]:
    """Resolve a frame's overlay timestamp to a (lat, lon) coordinate.

    The frame time converts to UTC by subtracting the offset. Between two
    fixes the position interpolates linearly on latitude and longitude
    independently; within 1 s outside the track span it clamps to the
    nearest endpoint. Results are rounded half-up to 5 decimals.

    Raises OutsideTrack beyond the clamp window and GapTooLarge when the
    bracketing fixes are more than 5 s apart.
    """
    if not track.fixes:
        raise EmptyTrack("cannot locate on an empty track")
    query_s = frame_time.to_seconds() - offset.overlay_minus_utc
    times = [_utc_seconds(f.time_utc) for f in track.fixes]

    if query_s < times[0]:
        if times[0] - query_s > ENDPOINT_CLAMP_S:
            raise OutsideTrack(f"query {times[0] - query_s:.3f} s before track start")
        fix = track.fixes[0]
        return round_coord(fix.lat), round_coord(fix.lon)
    if query_s > times[-1]:
        if query_s - times[-1] > ENDPOINT_CLAMP_S:
            raise OutsideTrack(f"query {query_s - times[-1]:.3f} s after track end")
        fix = track.fixes[-1]
        return round_coord(fix.lat), round_coord(fix.lon)

    pos = bisect_left(times, query_s)
    if pos < len(times) and times[pos] == query_s:
        fix = track.fixes[pos]
        return round_coord(fix.lat), round_coord(fix.lon)

    before, after = track.fixes[pos - 1], track.fixes[pos]
    gap = times[pos] - times[pos - 1]
    if gap > MAX_GAP_S:
        raise GapTooLarge(f"bracketing fixes {gap:.3f} s apart")
    frac = (query_s - times[pos - 1]) / gap
    lat = before.lat + frac * (after.lat - before.lat)
    lon = before.lon + frac * (after.lon - before.lon)
    return round_coord(lat), round_coord(lon)


def overlay_to_utc(frame_time: CanonicalTimestamp, offset: ClockOffset) -> datetime:
    """The UTC instant a frame's overlay timestamp corresponds to."""
    naive = frame_time.to_datetime() - timedelta(seconds=offset.overlay_minus_utc)
    return naive.replace(tzinfo=timezone.utc)


def pair_calibration_samples(
    overlay_times: Sequence[CanonicalTimestamp],
    track: GpsTrack,
    max_elapsed_mismatch_s: float = 2.0,
) -> tuple[list[CanonicalTimestamp], list[datetime]]:
    """Pair overlay timestamps with GPS fixes by elapsed time from stream start.

    Auto-calibration has no shared time base, so it assumes the dashcam
    recording and the GPS log started together and aligns samples by their
    elapsed offset within their own stream. Pass an explicit offset instead
    when that assumption does not hold.
    """
    if not overlay_times or not track.fixes:
        return [], []
    overlay_zero = overlay_times[0].to_seconds()
    fix_seconds = [_utc_seconds(f.time_utc) for f in track.fixes]
    fix_zero = fix_seconds[0]
    fix_elapsed = [s - fix_zero for s in fix_seconds]

    paired_overlay: list[CanonicalTimestamp] = []
    paired_utc: list[datetime] = []
    for overlay in overlay_times:
        elapsed = overlay.to_seconds() - overlay_zero
        pos = bisect_left(fix_elapsed, elapsed)
        candidates = [p for p in (pos - 1, pos) if 0 <= p < len(fix_elapsed)]
        best = min(candidates, key=lambda p: abs(fix_elapsed[p] - elapsed))
        if abs(fix_elapsed[best] - elapsed) <= max_elapsed_mismatch_s:
            paired_overlay.append(overlay)
            paired_utc.append(track.fixes[best].time_utc)
    return paired_overlay, paired_utc
