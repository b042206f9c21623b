"""Normalization of OCR'd dashcam overlay timestamps into a per-frame timeline.

Dashcam overlays render a wall-clock timestamp into the video frame; an OCR
engine reads it back out with characteristic noise: ":" misread as ".",
date separators ("-" or "/") misread as the digit "1", and an optional
trailing millisecond group. This module turns that noisy text into
canonical timestamps and repairs per-frame timelines so every frame has a
usable time even when individual reads fail.
"""
from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass, field
from datetime import date as _date
from datetime import datetime, timedelta
from typing import Callable, Optional, Sequence

logger = logging.getLogger(__name__)

# Parsed fields of DD-MM-YYYY (or DD/MM/YYYY, DD.MM.YYYY) with either date
# delimiter possibly misread as the digit "1".
_DATE_RE = re.compile(r"^(\d{2})([-/.1])(\d{2})([-/.1])(\d{4})$")
# HH:MM:SS with ":" possibly misread as ".", plus an optional 3-digit
# millisecond group after a "." or ":".
_TIME_RE = re.compile(r"^(\d{2})[:.](\d{2})[:.](\d{2})(?:[:.](\d{3}))?$")

_EPOCH = datetime(1970, 1, 1)

DEFAULT_FPS = 30.0

# Largest tolerated disagreement (seconds) between a parsed frame timestamp
# and the anchor-extrapolated value before the frame is repaired.
MONOTONICITY_TOLERANCE_S = 2.0


class TimestampError(ValueError):
    """Base class for overlay timestamp parse failures."""


class UnparsableTimestamp(TimestampError):
    """No supported pattern matches the overlay text."""


class InvalidCalendarDate(TimestampError):
    """A pattern matched but a date or time field is out of range."""


class NoAnchor(ValueError):
    """Fewer than two mutually consistent parsed frames in the session."""


@dataclass(frozen=True)
class RawOverlayText:
    """One frame's overlay text exactly as emitted by the OCR engine."""

    frame_index: int
    text: str


@dataclass(frozen=True, order=True)
class CanonicalTimestamp:
    """A normalized overlay timestamp: calendar date, time of day, milliseconds.

    The timestamp carries no timezone; it is whatever clock the dashcam
    overlay was showing. ``millis`` is 0 when the overlay had no
    millisecond group.
    """

    year: int
    month: int
    day: int
    hour: int
    minute: int
    second: int
    millis: int = 0

    def __post_init__(self):
        _date(self.year, self.month, self.day)  # raises ValueError if invalid
        if not (0 <= self.hour < 24 and 0 <= self.minute < 60 and 0 <= self.second < 60):
            raise ValueError(f"time of day out of range: {self}")
        if not 0 <= self.millis <= 999:
            raise ValueError(f"millis out of range: {self.millis}")

    @classmethod
    def from_datetime(cls, dt: datetime) -> "CanonicalTimestamp":
        millis = round(dt.microsecond / 1000)
        if millis == 1000:
            dt = dt.replace(microsecond=0) + timedelta(seconds=1)
            millis = 0
        return cls(dt.year, dt.month, dt.day, dt.hour, dt.minute, dt.second, millis)

    def to_datetime(self) -> datetime:
        return datetime(self.year, self.month, self.day, self.hour,
                        self.minute, self.second, self.millis * 1000)

    def to_seconds(self) -> float:
        """Seconds since 1970-01-01 00:00:00 on the overlay's own clock."""
        return (self.to_datetime() - _EPOCH).total_seconds()

    def add_seconds(self, seconds: float) -> "CanonicalTimestamp":
        """Shifted copy, re-quantized to whole milliseconds."""
        return CanonicalTimestamp.from_datetime(self.to_datetime() + timedelta(seconds=seconds))

    def render(self) -> str:
        """Format back to DD-MM-YYYY HH:MM:SS, with .mmm only when nonzero."""
        base = (f"{self.day:02d}-{self.month:02d}-{self.year:04d} "
                f"{self.hour:02d}:{self.minute:02d}:{self.second:02d}")
        return f"{base}.{self.millis:03d}" if self.millis else base


# An extension pattern receives the raw text and returns a CanonicalTimestamp
# or None to decline. Tried, in order, only after the builtin grammar fails
# to match at all.
ExtraPattern = Callable[[str], Optional[CanonicalTimestamp]]


def normalize_overlay_text(raw: RawOverlayText | str,
                           extra_patterns: Sequence[ExtraPattern] = ()) -> CanonicalTimestamp:
    """Parse one overlay text into a CanonicalTimestamp.

    Accepts DD-MM-YYYY HH:MM:SS (date delimiters "-", "/", "."
    interchangeably) with the known OCR corruptions: "." in a time
    delimiter slot reads as ":", and the digit "1" in a date delimiter
    slot reads as the original "-" or "/". An optional trailing 3-digit
    millisecond group after "." or ":" is preserved. Dates are day-month-year.

    Raises UnparsableTimestamp when no pattern matches, and
    InvalidCalendarDate when the pattern matches but a field is out of
    range (e.g. month 99). A date token admitting more than one valid
    calendar reading is rejected as UnparsableTimestamp rather than guessed.
    """
    text = raw.text if isinstance(raw, RawOverlayText) else raw
    if not text or not text.strip():
        raise UnparsableTimestamp("empty overlay text")

    tokens = text.split()
    if len(tokens) != 2:
        return _try_extensions(text, extra_patterns,
                               UnparsableTimestamp(f"expected date and time tokens: {text!r}"))

    date_token, time_token = tokens

    date_match = _DATE_RE.match(date_token)
    time_match = _TIME_RE.match(time_token)
    if date_match is None or time_match is None:
        return _try_extensions(text, extra_patterns,
                               UnparsableTimestamp(f"unrecognized timestamp layout: {text!r}"))

    readings = _date_readings(date_token)
    if len(readings) > 1:
        raise UnparsableTimestamp(f"ambiguous date token {date_token!r}: "
                                  f"{sorted(readings)}")

    day, month, year = int(date_match.group(1)), int(date_match.group(3)), int(date_match.group(5))
    hour, minute, second = (int(time_match.group(i)) for i in (1, 2, 3))
    millis = int(time_match.group(4)) if time_match.group(4) else 0

    try:
        return CanonicalTimestamp(year, month, day, hour, minute, second, millis)
    except ValueError as exc:
        raise InvalidCalendarDate(f"{text!r}: {exc}") from exc


def _date_readings(token: str) -> set[tuple[int, int, int]]:
    """All valid (day, month, year) readings over the delimiter-slot grammar.

    For the fixed two-digit day/month widths the slots are positionally
    forced, so at most one reading exists today; the enumeration keeps the
    ambiguity rejection honest if the grammar is ever widened.
    """
    readings = set()
    for i in range(1, len(token) - 5):
        j = i + 3
        if j >= len(token):
            break
        day_s, month_s, year_s = token[:i], token[i + 1:j], token[j + 1:]
        if token[i] not in "-/.1" or token[j] not in "-/.1":
            continue
        if len(day_s) != 2 or len(month_s) != 2 or len(year_s) != 4:
            continue
        if not (day_s.isdigit() and month_s.isdigit() and year_s.isdigit()):
            continue
        try:
            _date(int(year_s), int(month_s), int(day_s))
        except ValueError:
            continue
        readings.add((int(day_s), int(month_s), int(year_s)))
    return readings


def _try_extensions(text: str, extra_patterns: Sequence[ExtraPattern],
                    failure: UnparsableTimestamp) -> CanonicalTimestamp:
    for pattern in extra_patterns:
        parsed = pattern(text)
        if parsed is not None:
            return parsed
    raise failure


@dataclass(frozen=True)
class FrameTimeline:
    """Per-frame timestamps, repaired to be non-decreasing."""

    entries: tuple[tuple[int, CanonicalTimestamp], ...]
    nominal_fps: float = DEFAULT_FPS
    repaired_frames: tuple[int, ...] = field(default=())

    def time_for(self, frame_index: int) -> CanonicalTimestamp:
        try:
            return self._by_index[frame_index]
        except KeyError:
            raise KeyError(f"frame {frame_index} not in timeline") from None

    def __contains__(self, frame_index: int) -> bool:
        return frame_index in self._by_index

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def _by_index(self) -> dict[int, CanonicalTimestamp]:
        cached = self.__dict__.get("_by_index_cache")
        if cached is None:
            cached = {idx: ts for idx, ts in self.entries}
            object.__setattr__(self, "_by_index_cache", cached)
        return cached


def build_timeline(raws: Sequence[RawOverlayText],
                   nominal_fps: float = DEFAULT_FPS,
                   tolerance_s: float = MONOTONICITY_TOLERANCE_S,
                   extra_patterns: Sequence[ExtraPattern] = ()) -> FrameTimeline:
    """Parse every frame's overlay text and repair the gaps.

    Frames whose text fails to parse, or whose parsed timestamp disagrees
    with the anchor-extrapolated value by more than ``tolerance_s``, get a
    repaired timestamp of ``anchor + (frame_index - anchor_index) / fps``.
    The anchor is the first frame of the largest set of mutually consistent
    parsed frames (two frames are consistent when their timestamp gap
    matches the frame-counter gap at ``nominal_fps`` within the tolerance).
    The result is non-decreasing.

    Raises NoAnchor when fewer than two parsed frames agree with each other.
    """
    if nominal_fps <= 0:
        raise ValueError("nominal_fps must be positive")
    indices = [raw.frame_index for raw in raws]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ValueError("frames must be sorted by frame_index and unique")

    parsed: dict[int, CanonicalTimestamp] = {}
    for raw in raws:
        try:
            parsed[raw.frame_index] = normalize_overlay_text(raw, extra_patterns)
        except TimestampError:
            logger.debug("frame %d overlay unparsable: %r", raw.frame_index, raw.text)

    anchor_index, anchor_ts = _find_anchor(parsed, nominal_fps, tolerance_s)
    anchor_s = anchor_ts.to_seconds()

    entries: list[tuple[int, CanonicalTimestamp]] = []
    repaired: list[int] = []
    for raw in raws:
        expected_s = anchor_s + (raw.frame_index - anchor_index) / nominal_fps
        kept = parsed.get(raw.frame_index)
        if kept is not None and abs(kept.to_seconds() - expected_s) <= tolerance_s:
            entries.append((raw.frame_index, kept))
        else:
            entries.append((raw.frame_index,
                            anchor_ts.add_seconds((raw.frame_index - anchor_index) / nominal_fps)))
            repaired.append(raw.frame_index)

    # Lift small backward jitters (parsed values inside the tolerance band
    # can still step backwards locally) to keep the timeline non-decreasing.
    monotone: list[tuple[int, CanonicalTimestamp]] = []
    for idx, ts in entries:
        if monotone and ts < monotone[-1][1]:
            ts = monotone[-1][1]
        monotone.append((idx, ts))

    return FrameTimeline(entries=tuple(monotone), nominal_fps=nominal_fps,
                         repaired_frames=tuple(repaired))


def _find_anchor(parsed: dict[int, CanonicalTimestamp], fps: float,
                 tolerance_s: float) -> tuple[int, CanonicalTimestamp]:
    """Pick the anchor frame from the largest mutually consistent set.

    With offsets u_i = t_i - i/fps, a set is mutually consistent exactly
    when its offsets span at most the tolerance, so the largest such set
    falls out of a sliding window over the sorted offsets.
    """
    if len(parsed) < 2:
        raise NoAnchor(f"{len(parsed)} parsed frame(s); need at least 2")

    offsets = sorted(
        (ts.to_seconds() - idx / fps, idx) for idx, ts in parsed.items()
    )
    best_members: list[int] = []
    lo = 0
    for hi in range(len(offsets)):
        while offsets[hi][0] - offsets[lo][0] > tolerance_s:
            lo += 1
        members = [idx for _, idx in offsets[lo:hi + 1]]
        if len(members) > len(best_members) or (
            len(members) == len(best_members) and members and min(members) < min(best_members)
        ):
            best_members = members

    if len(best_members) < 2:
        raise NoAnchor("no two parsed frames are mutually consistent")

    anchor_index = min(best_members)
    return anchor_index, parsed[anchor_index]


# --- frame manifest -------------------------------------------------------

MANIFEST_FIELDS = ("frame_index", "overlay_text", "evidence_path")


class MalformedManifest(ValueError):
    """A frame manifest row is unreadable."""


@dataclass(frozen=True)
class FrameManifest:
    """Parsed frame manifest: raw overlay texts plus optional evidence paths."""

    raws: tuple[RawOverlayText, ...]
    evidence_paths: dict[int, str]


def read_frame_manifest(data: bytes | str) -> FrameManifest:
    """Read the line-delimited frame manifest (CSV, header required).

    Columns: frame_index (integer), overlay_text (string), evidence_path
    (optional, may be empty). Rows are returned sorted by frame_index.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:2]] != list(MANIFEST_FIELDS[:2]):
        raise MalformedManifest(
            f"manifest header must start with {MANIFEST_FIELDS[0]},{MANIFEST_FIELDS[1]}")

    raws: list[RawOverlayText] = []
    evidence: dict[int, str] = {}
    for line_no, row in enumerate(reader, start=2):
        try:
            frame_index = int(row["frame_index"])
            overlay_text = row["overlay_text"]
            if overlay_text is None:
                raise ValueError("missing overlay_text")
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedManifest(f"manifest line {line_no}: {exc}") from exc
        raws.append(RawOverlayText(frame_index=frame_index, text=overlay_text))
        path = (row.get("evidence_path") or "").strip()
        if path:
            evidence[frame_index] = path

    raws.sort(key=lambda r: r.frame_index)
    seen = set()
    for raw in raws:
        if raw.frame_index in seen:
            raise MalformedManifest(f"duplicate frame_index {raw.frame_index}")
        seen.add(raw.frame_index)
    return FrameManifest(raws=tuple(raws), evidence_paths=evidence)
