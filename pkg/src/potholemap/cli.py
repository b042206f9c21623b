"""Command-line interface: ingest, serve, export, calibrate, report.

Exit codes: 0 success, 2 usage error (bad flags, unreadable paths), 3 data
error (inputs parsed but unusable), 4 storage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .overlay_time import MalformedManifest, read_frame_manifest
from .pipeline import DataError, calibrate_parts, ingest_session
from .report import write_report
from .service import ApiConfig
from .store import (
    WORLD_BBOX,
    StorageFailure,
    Store,
    StoreError,
    feature_collection,
    geojson_dumps,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_STORAGE = 4


class UsageError(Exception):
    """Bad invocation (unreadable path, malformed flag value)."""


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _load_config(args: argparse.Namespace) -> ApiConfig:
    try:
        return ApiConfig.load(getattr(args, "config", None))
    except (OSError, ValueError) as exc:
        raise UsageError(f"bad config: {exc}") from exc


def _load_evidence(frames: bytes, manifest_path: str) -> dict[str, bytes]:
    """Evidence files referenced by the manifest, relative to its directory.

    Missing files are skipped here; the pipeline reports them as
    missing_evidence diagnostics.
    """
    try:
        manifest = read_frame_manifest(frames)
    except MalformedManifest:
        return {}  # the pipeline raises the authoritative error
    base = Path(manifest_path).parent
    evidence: dict[str, bytes] = {}
    for path in set(manifest.evidence_paths.values()):
        candidate = base / path
        if candidate.is_file():
            evidence[path] = candidate.read_bytes()
    return evidence


def _cmd_ingest(args: argparse.Namespace) -> int:
    config = _load_config(args)
    store_path = args.store or config.store_path
    frames = _read_bytes(args.frames)
    detections = _read_bytes(args.detections)
    gps = _read_bytes(args.gps)
    road_meta = None
    if args.road_meta:
        try:
            road_meta = json.loads(args.road_meta)
            if not isinstance(road_meta, dict):
                raise ValueError("road meta must be a JSON object")
        except ValueError as exc:
            raise UsageError(f"bad --road-meta: {exc}") from exc

    with Store(store_path) as store:
        report = ingest_session(
            store, frames, detections, gps,
            gps_format=args.gps_format,
            offset_s=args.offset_s,
            evidence=_load_evidence(frames, args.frames),
            road_meta=road_meta,
            config=config.pipeline_config(),
        )
    d = report.delta
    print(f"session {report.session_id}")
    print(f"offset_s={_fmt_seconds(report.offset_s)}")
    print(f"created={d.created} updated={d.updated} fixed={d.fixed} reopened={d.reopened}")
    print(f"frames={report.frame_count} repaired={report.repaired_frames}")
    print(f"detections accepted={report.detections_accepted} "
          f"rejected={report.detections_rejected} "
          f"dropped_low_confidence={report.dropped_low_confidence}")
    print(f"observations dropped={report.dropped_observations} "
          f"clusters={report.cluster_count}")
    print(f"evidence missing={report.missing_evidence} "
          f"oversize={report.oversize_evidence}")
    return EXIT_OK


def _cmd_export(args: argparse.Namespace) -> int:
    if not Path(args.store).is_file():
        raise UsageError(f"store not found: {args.store}")
    status_filter = None
    if args.status:
        status_filter = {s.strip() for s in args.status.split(",") if s.strip()}
    with Store(args.store) as store:
        records = store.query(WORLD_BBOX, status_filter=status_filter)
    body = geojson_dumps(feature_collection(records))
    try:
        Path(args.out).write_text(body, encoding="utf-8")
    except OSError as exc:
        print(f"error[WriteFailed]: {exc}", file=sys.stderr)
        return EXIT_STORAGE
    print(f"wrote {len(records)} feature(s) to {args.out}")
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    frames = _read_bytes(args.frames)
    gps = _read_bytes(args.gps)
    offset = calibrate_parts(frames, gps, gps_format=args.gps_format)
    print(_fmt_seconds(offset))
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    if not Path(args.store).is_file():
        raise UsageError(f"store not found: {args.store}")
    with Store(args.store) as store:
        records = store.all_records()
    for path in write_report(records, args.out_dir):
        print(path)
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    config = _load_config(args)
    overrides = {}
    if args.host:
        overrides["host"] = args.host
    if args.port:
        overrides["port"] = args.port
    if args.store:
        overrides["store_path"] = args.store
    if args.static_dir:
        overrides["static_dir"] = args.static_dir
    if overrides:
        config = dataclasses.replace(config, **overrides)
    from .service import run

    run(config)
    return EXIT_OK


def _fmt_seconds(value: float) -> str:
    """Millisecond precision with trailing zeros trimmed: 19844.0 -> '19844'."""
    text = f"{value:.3f}".rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="potholemap",
        description="Dashcam pothole sessions to a deduplicated geotagged registry.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ingest", help="process one session into the registry")
    p.add_argument("--frames", required=True, help="frame manifest CSV path")
    p.add_argument("--detections", required=True, help="detection CSV path")
    p.add_argument("--gps", required=True, help="GPS log path")
    p.add_argument("--offset-s", type=float, default=None, dest="offset_s",
                   help="overlay-minus-UTC seconds; omit to auto-calibrate")
    p.add_argument("--store", default=None, help="registry database path")
    p.add_argument("--gps-format", choices=("csv", "gpx"), default="csv")
    p.add_argument("--road-meta", default=None,
                   help='JSON object, e.g. \'{"road_type": "arterial"}\'')
    p.add_argument("--config", default=None, help="JSON config path")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("export", help="write the registry as GeoJSON")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True, help="output .geojson path")
    p.add_argument("--status", default=None,
                   help="comma-separated status filter, e.g. open,reopened")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("calibrate", help="print the overlay clock offset in seconds")
    p.add_argument("--frames", required=True)
    p.add_argument("--gps", required=True)
    p.add_argument("--gps-format", choices=("csv", "gpx"), default="csv")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("report", help="write CSV summary and overview figures")
    p.add_argument("--store", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("serve", help="host the HTTP API")
    p.add_argument("--config", default=None, help="JSON config path")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--store", default=None)
    p.add_argument("--static-dir", default=None, dest="static_dir",
                   help="directory of built web UI assets to mount at /ui")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error[Usage]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error[{exc.code}] ({exc.part}): {exc.message}", file=sys.stderr)
        return EXIT_DATA
    except StorageFailure as exc:
        print(f"error[StorageFailure]: {exc}", file=sys.stderr)
        return EXIT_STORAGE
    except StoreError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_STORAGE


if __name__ == "__main__":
    sys.exit(main())
