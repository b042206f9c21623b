"""Detector output ingestion and bounding-box severity assessment.

The neural detector itself sits behind a pluggable backend boundary; the
pipeline consumes its records (normalized bounding boxes plus confidence)
from files, so it runs without any model on the machine. Severity is a
dimensional heuristic over the box's share of the frame area; the cutoffs
are configuration, not measured constants.
"""
from __future__ import annotations

import csv
import enum
import io
import random
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

DETECTION_CSV_FIELDS = ("frame_index", "cx", "cy", "w", "h", "confidence")

DEFAULT_CONFIDENCE_THRESHOLD = 0.25

_EDGE_TOLERANCE = 1e-9


class Severity(enum.IntEnum):
    """Three-level severity scale, ordered LOW < MEDIUM < HIGH."""

    LOW = 1
    MEDIUM = 2
    HIGH = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "Severity":
        return cls[label.upper()]


@dataclass(frozen=True)
class SeverityThresholds:
    """Frame-area cutoffs for the severity levels (heuristic defaults).

    Box area below ``low_max`` is LOW, below ``medium_max`` MEDIUM,
    anything at or above ``medium_max`` HIGH.
    """

    low_max: float = 0.01
    medium_max: float = 0.05

    def __post_init__(self):
        if not 0 < self.low_max < self.medium_max:
            raise ValueError("need 0 < low_max < medium_max")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box, center and extent as fractions of the frame."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"box center outside unit frame: ({self.cx}, {self.cy})")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError(f"box extent out of range: ({self.w}, {self.h})")
        if (self.cx - self.w / 2 < -_EDGE_TOLERANCE or self.cx + self.w / 2 > 1.0 + _EDGE_TOLERANCE
                or self.cy - self.h / 2 < -_EDGE_TOLERANCE or self.cy + self.h / 2 > 1.0 + _EDGE_TOLERANCE):
            raise ValueError("box extends beyond the unit frame")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def aspect_ratio(self) -> float:
        """Width over height; recorded for future shape-aware severity rules."""
        return self.w / self.h


@dataclass(frozen=True)
class Detection:
    """One detector hit on one frame."""

    frame_index: int
    bbox: BoundingBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")


def assess_severity(detection: Detection,
                    thresholds: SeverityThresholds = SeverityThresholds()) -> Severity:
    """Severity from box area; monotone in both box dimensions."""
    area = detection.bbox.area
    if area < thresholds.low_max:
        return Severity.LOW
    if area < thresholds.medium_max:
        return Severity.MEDIUM
    return Severity.HIGH


@dataclass(frozen=True)
class RejectedRecord:
    """A detection record that failed validation, with its line number."""

    line_no: int
    reason: str


@dataclass(frozen=True)
class DetectionIngest:
    """Outcome of reading a detection file: survivors plus a reject report."""

    detections: tuple[Detection, ...]
    rejected: tuple[RejectedRecord, ...]
    dropped_low_confidence: int

    @property
    def rejected_count(self) -> int:
        return len(self.rejected)


def ingest_detections(data: bytes | str,
                      confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD) -> DetectionIngest:
    """Read line-delimited detection records (CSV, header required).

    Columns: frame_index, cx, cy, w, h, confidence. Records violating the
    bounding-box invariants are collected as rejects rather than aborting
    the ingest; records below the confidence threshold are dropped and
    counted. Input order is preserved for the survivors.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != list(DETECTION_CSV_FIELDS):
        raise MalformedDetectionFile(
            f"detection header must be {','.join(DETECTION_CSV_FIELDS)}")

    detections: list[Detection] = []
    rejected: list[RejectedRecord] = []
    dropped = 0
    for line_no, row in enumerate(reader, start=2):
        try:
            confidence = float(row["confidence"])
            bbox = BoundingBox(cx=float(row["cx"]), cy=float(row["cy"]),
                               w=float(row["w"]), h=float(row["h"]))
            record = Detection(frame_index=int(row["frame_index"]),
                               bbox=bbox, confidence=confidence)
        except (KeyError, TypeError, ValueError) as exc:
            rejected.append(RejectedRecord(line_no=line_no, reason=str(exc)))
            continue
        if record.confidence < confidence_threshold:
            dropped += 1
            continue
        detections.append(record)
    return DetectionIngest(detections=tuple(detections),
                           rejected=tuple(rejected),
                           dropped_low_confidence=dropped)


class MalformedDetectionFile(ValueError):
    """The detection file as a whole is unreadable (bad header/encoding)."""


# --- detector backend boundary ---------------------------------------------

@dataclass(frozen=True)
class BackendInfo:
    """Capability descriptor for a detector backend."""

    name: str
    version: str
    thread_safe: bool = True


class DetectorBackend(Protocol):
    """Anything that can produce detections for a frame reference.

    Implementations must be deterministic for a fixed model artifact and
    input, and either safe to call from concurrent workers or declare
    ``thread_safe=False`` in their info.
    """

    @property
    def info(self) -> BackendInfo: ...

    def detect(self, frame_index: int) -> Sequence[Detection]: ...


class FileDetectorBackend:
    """Serves precomputed detection records from an ingested file."""

    def __init__(self, detections: DetectionIngest | Iterable[Detection]):
        if isinstance(detections, DetectionIngest):
            detections = detections.detections
        self._by_frame: dict[int, list[Detection]] = {}
        for det in detections:
            self._by_frame.setdefault(det.frame_index, []).append(det)

    @property
    def info(self) -> BackendInfo:
        return BackendInfo(name="file", version="1")

    def detect(self, frame_index: int) -> Sequence[Detection]:
        return tuple(self._by_frame.get(frame_index, ()))


class SyntheticDetectorBackend:
    """Deterministic generator for tests: every Nth frame gets one box."""

    def __init__(self, seed: int = 0, hit_every: int = 10):
        self._seed = seed
        self._hit_every = max(1, hit_every)

    @property
    def info(self) -> BackendInfo:
        return BackendInfo(name="synthetic", version="1")

    def detect(self, frame_index: int) -> Sequence[Detection]:
        if frame_index % self._hit_every:
            return ()
        rng = random.Random(f"{self._seed}:{frame_index}")
        w = rng.uniform(0.02, 0.4)
        h = rng.uniform(0.02, 0.4)
        cx = rng.uniform(w / 2, 1 - w / 2)
        cy = rng.uniform(h / 2, 1 - h / 2)
        bbox = BoundingBox(cx=cx, cy=cy, w=w, h=h)
        return (Detection(frame_index=frame_index, bbox=bbox,
                          confidence=rng.uniform(0.3, 1.0)),)


def detections_to_csv(detections: Iterable[Detection]) -> str:
    """Render detections back to the file format (fixture/tooling helper)."""
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(DETECTION_CSV_FIELDS)
    for det in detections:
        writer.writerow([det.frame_index, det.bbox.cx, det.bbox.cy,
                         det.bbox.w, det.bbox.h, det.confidence])
    return out.getvalue()
