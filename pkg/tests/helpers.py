"""Synthetic session builders shared across the test modules.

Sessions are built from a vehicle scenario: a UTC start instant, a constant
overlay-clock offset, a track (usually straight north at constant speed),
and pothole sightings pinned to frame ranges. Overlay timestamps quantize
to whole seconds unless a test asks for millisecond overlays.
"""
from __future__ import annotations

import base64
from datetime import datetime, timedelta, timezone
from typing import Optional, Sequence

# Meters per degree of latitude for earth radius 6371000 (pi/180 * R).
M_PER_DEG_LAT = 111194.92664455873

UTC0 = datetime(2025, 3, 1, 6, 30, 0, tzinfo=timezone.utc)

# The overlay-minus-UTC offset used by IST-style fixtures: 5 h 30 m 44 s.
IST_OFFSET_S = 19844

# A valid 1x1 PNG, used as evidence payload.
PNG_1PX = base64.b64decode(
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mP8"
    "z8BQDwAEhQGAhKmMIQAAAABJRU5ErkJggg==")


def render_overlay(dt: datetime, millis: Optional[int] = None) -> str:
    base = dt.strftime("%d-%m-%Y %H:%M:%S")
    return f"{base}.{millis:03d}" if millis is not None else base


def frames_csv(rows: Sequence[tuple[int, str, str]]) -> bytes:
    lines = ["frame_index,overlay_text,evidence_path"]
    for idx, text, evidence in rows:
        lines.append(f"{idx},{text},{evidence}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def simple_frames(start_overlay: datetime, n_frames: int, fps: int = 30,
                  evidence: Optional[dict[int, str]] = None) -> bytes:
    """Manifest of n_frames with second-quantized overlay text."""
    evidence = evidence or {}
    rows = []
    for i in range(n_frames):
        t = start_overlay + timedelta(seconds=i // fps)
        rows.append((i, render_overlay(t), evidence.get(i, "")))
    return frames_csv(rows)


def gps_csv(fixes: Sequence[tuple[datetime, float, float]]) -> bytes:
    lines = ["time_utc,lat,lon"]
    for t, lat, lon in fixes:
        lines.append(f"{t.strftime('%Y-%m-%dT%H:%M:%SZ')},{lat:.7f},{lon:.7f}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def northward_fixes(start_utc: datetime, lat0: float, lon0: float,
                    speed_mps: float, seconds: int,
                    period_s: float = 1.0) -> list[tuple[datetime, float, float]]:
    """1 Hz (by default) fixes of a vehicle driving due north."""
    fixes = []
    steps = int(seconds / period_s)
    for k in range(steps + 1):
        t = start_utc + timedelta(seconds=k * period_s)
        lat = lat0 + (k * period_s * speed_mps) / M_PER_DEG_LAT
        fixes.append((t, lat, lon0))
    return fixes


def detections_csv(rows: Sequence[tuple]) -> bytes:
    lines = ["frame_index,cx,cy,w,h,confidence"]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    return ("\n".join(lines) + "\n").encode("utf-8")


def pothole_rows(frame_range: range, w: float, h: float,
                 confidence: float = 0.9) -> list[tuple]:
    return [(i, 0.5, 0.5, w, h, confidence) for i in frame_range]


def session_parts(*, n_frames: int = 300, fps: int = 30,
                  offset_s: int = IST_OFFSET_S,
                  lat0: float = 20.29, lon0: float = 85.82,
                  speed_mps: float = 10.0,
                  detection_rows: Sequence[tuple] = (),
                  evidence: Optional[dict[int, str]] = None,
                  utc0: datetime = UTC0) -> dict[str, bytes]:
    """One coherent session: manifest, detections, and GPS log.

    The GPS track covers the whole video duration plus one trailing second
    so every frame's timestamp locates.
    """
    overlay0 = utc0 + timedelta(seconds=offset_s)
    seconds = n_frames // fps + 1
    return {
        "frames": simple_frames(overlay0, n_frames, fps, evidence),
        "detections": detections_csv(detection_rows),
        "gps": gps_csv(northward_fixes(utc0, lat0, lon0, speed_mps, seconds)),
    }


def ground_truth_lat(lat0: float, speed_mps: float, elapsed_s: float) -> float:
    return lat0 + elapsed_s * speed_mps / M_PER_DEG_LAT


# The desk-scale end-to-end scenario: 300 dashcam frames plus 50 negative
# frames, three potholes each sighted across one run of consecutive frames.
# Every run sits inside a single overlay second, so all of a pothole's
# observations interpolate to the same coordinate.
DESK_POTHOLES = (
    {"frames": range(30, 45), "w": 0.05, "h": 0.05, "severity": "low"},
    {"frames": range(120, 128), "w": 0.15, "h": 0.15, "severity": "medium"},
    {"frames": range(210, 230), "w": 0.30, "h": 0.30, "severity": "high"},
)


def desk_fixture(evidence: bool = False) -> dict:
    """The 350-frame, 3-pothole end-to-end fixture with ground truth."""
    lat0, lon0, speed = 20.29, 85.82, 10.0
    rows: list[tuple] = []
    ev_paths: dict[int, str] = {}
    ev_files: dict[str, bytes] = {}
    for k, spec in enumerate(DESK_POTHOLES):
        rows.extend(pothole_rows(spec["frames"], spec["w"], spec["h"]))
        if evidence:
            first = spec["frames"][0]
            path = f"frame_{first}.png"
            ev_paths[first] = path
            ev_files[path] = PNG_1PX
    # low-confidence noise on otherwise-negative frames, dropped by threshold
    rows.extend((i, 0.5, 0.5, 0.02, 0.02, 0.10) for i in (5, 160, 300))
    parts = session_parts(n_frames=350, detection_rows=rows,
                          evidence=ev_paths if evidence else None)
    truth = [
        (ground_truth_lat(lat0, speed, spec["frames"][0] // 30), lon0)
        for spec in DESK_POTHOLES
    ]
    return {
        **parts,
        "evidence_files": ev_files,
        "truth": truth,
        "severities": [spec["severity"] for spec in DESK_POTHOLES],
    }
