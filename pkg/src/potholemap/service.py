"""HTTP API: session ingestion, GeoJSON pothole queries, status management.

Every error body carries a machine-readable ``error`` code plus a human
``message`` (and ``part`` when a specific upload part is at fault). GeoJSON
responses go through the same serializer as file exports, so identical
registry states produce byte-identical bodies.
"""
from __future__ import annotations

import json
import os
from contextlib import asynccontextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .detection import DEFAULT_CONFIDENCE_THRESHOLD, SeverityThresholds
from .geotag_dedup import DEFAULT_CORRIDOR_M, DEFAULT_DEDUP_RADIUS_M, DedupConfig
from .pipeline import DataError, PipelineConfig, ingest_session
from .store import (
    IllegalTransition,
    MalformedBBox,
    StorageFailure,
    Store,
    UnknownRecord,
    feature_collection,
    geojson_dumps,
    parse_utc,
    record_to_feature,
)

DEFAULT_MAX_UPLOAD_BYTES = 64 * 1024 * 1024

GPS_FORMATS = ("csv", "gpx")

_ENV_PREFIX = "POTHOLEMAP_"


@dataclass(frozen=True)
class ApiConfig:
    """Service configuration; file values first, environment overrides last."""

    host: str = "127.0.0.1"
    port: int = 8000
    store_path: str = "potholes.db"
    radius_m: float = DEFAULT_DEDUP_RADIUS_M
    corridor_m: float = DEFAULT_CORRIDOR_M
    severity_low_max: float = 0.01
    severity_medium_max: float = 0.05
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD_BYTES
    auth_token: Optional[str] = None
    static_dir: Optional[str] = None

    def __post_init__(self):
        numeric = (self.port, self.radius_m, self.corridor_m,
                   self.severity_low_max, self.severity_medium_max,
                   self.max_upload_bytes)
        if any(v <= 0 for v in numeric):
            raise ValueError("all numeric config parameters must be positive")
        if self.severity_low_max >= self.severity_medium_max:
            raise ValueError("severity_low_max must be below severity_medium_max")
        if not 0 <= self.confidence_threshold <= 1:
            raise ValueError("confidence_threshold must be within [0, 1]")

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            confidence_threshold=self.confidence_threshold,
            severity_thresholds=SeverityThresholds(low_max=self.severity_low_max,
                                                   medium_max=self.severity_medium_max),
            dedup=DedupConfig(radius_m=self.radius_m),
            corridor_m=self.corridor_m,
        )

    @classmethod
    def load(cls, path: Optional[str] = None,
             env: Optional[dict] = None) -> "ApiConfig":
        """Config from a JSON file (keys = field names) plus env overrides.

        Environment variables are the field names upper-cased with a
        POTHOLEMAP_ prefix, e.g. POTHOLEMAP_STORE_PATH, POTHOLEMAP_PORT.
        """
        env = os.environ if env is None else env
        values: dict = {}
        if path is not None:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
            if not isinstance(raw, dict):
                raise ValueError("config file must hold a JSON object")
            unknown = set(raw) - set(cls.__dataclass_fields__)
            if unknown:
                raise ValueError(f"unknown config keys: {sorted(unknown)}")
            values.update(raw)
        for name, fd in cls.__dataclass_fields__.items():
            text = env.get(_ENV_PREFIX + name.upper())
            if text is None:
                continue
            if fd.type in ("int", int):
                values[name] = int(text)
            elif fd.type in ("float", float):
                values[name] = float(text)
            else:
                values[name] = text
        return cls(**values)


def _error(status: int, code: str, message: str,
           part: Optional[str] = None) -> JSONResponse:
    body: dict = {"error": code, "message": message}
    if part is not None:
        body["part"] = part
    return JSONResponse(status_code=status, content=body)


def create_app(config: ApiConfig = ApiConfig(),
               store: Optional[Store] = None) -> FastAPI:
    """Build the application; a caller-supplied store is not closed on shutdown."""
    own_store = store is None

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        if own_store:
            app.state.store.close()

    app = FastAPI(title="potholemap", lifespan=lifespan,
                  docs_url=None, redoc_url=None, openapi_url=None)
    app.state.store = store if store is not None else Store(config.store_path)
    app.state.config = config

    if config.auth_token is not None:
        @app.middleware("http")
        async def require_token(request: Request, call_next):
            if (request.url.path.startswith("/api")
                    and request.headers.get("X-Auth-Token") != config.auth_token):
                return _error(401, "Unauthorized", "missing or invalid X-Auth-Token")
            return await call_next(request)

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _error(400, "BadRequest", str(exc))

    @app.post("/api/sessions", status_code=201)
    async def post_session(request: Request):
        # Parsed by hand so every missing or malformed part gets a 400 with
        # the part named, rather than a framework-shaped validation error.
        form = await request.form()

        files = {}
        total_bytes = 0
        for name in ("frames", "detections", "gps"):
            part = form.get(name)
            if part is None:
                return _error(400, "MissingPart", f"multipart field {name!r} is required",
                              part=name)
            if isinstance(part, str):
                payload = part.encode("utf-8")
            else:
                payload = await part.read()
            files[name] = payload
            total_bytes += len(payload)

        evidence: dict[str, bytes] = {}
        for part in form.getlist("evidence"):
            if isinstance(part, str) or not part.filename:
                return _error(400, "BadEvidence",
                              "evidence parts must be files with filenames",
                              part="evidence")
            payload = await part.read()
            total_bytes += len(payload)
            evidence[part.filename] = payload

        if total_bytes > config.max_upload_bytes:
            return _error(413, "PayloadTooLarge",
                          f"upload totals {total_bytes} bytes; "
                          f"cap is {config.max_upload_bytes}")

        gps_format = form.get("gps_format")
        if gps_format is None:
            gps_part = form.get("gps")
            filename = getattr(gps_part, "filename", "") or ""
            gps_format = "gpx" if filename.lower().endswith(".gpx") else "csv"
        if gps_format not in GPS_FORMATS:
            return _error(400, "BadGpsFormat",
                          f"gps_format must be one of {GPS_FORMATS}", part="gps")

        offset_s: Optional[float] = None
        offset_text = form.get("offset_s")
        if offset_text is not None:
            try:
                offset_s = float(offset_text)
            except (TypeError, ValueError):
                return _error(400, "BadOffset",
                              f"offset_s must be a number, got {offset_text!r}")

        road_meta: Optional[dict] = None
        road_meta_text = form.get("road_meta")
        if road_meta_text is not None:
            try:
                parsed = json.loads(road_meta_text)
            except json.JSONDecodeError as exc:
                return _error(400, "BadRoadMeta", f"road_meta is not JSON: {exc}")
            if (not isinstance(parsed, dict)
                    or any(not isinstance(v, str) for v in parsed.values())):
                return _error(400, "BadRoadMeta",
                              "road_meta must be a JSON object of strings")
            road_meta = parsed

        try:
            report = ingest_session(
                app.state.store, files["frames"], files["detections"], files["gps"],
                gps_format=gps_format, offset_s=offset_s, evidence=evidence,
                road_meta=road_meta, config=config.pipeline_config())
        except DataError as exc:
            return _error(400, exc.code, exc.message, part=exc.part)
        except StorageFailure as exc:
            return _error(500, "StorageFailure", str(exc))
        return JSONResponse(status_code=201, content=report.as_dict())

    @app.get("/api/potholes")
    def get_potholes(request: Request):
        params = request.query_params
        bbox_text = params.get("bbox")
        if bbox_text is None:
            return _error(400, "MalformedBBox",
                          "bbox=min_lat,min_lon,max_lat,max_lon is required")
        parts = bbox_text.split(",")
        if len(parts) != 4:
            return _error(400, "MalformedBBox",
                          f"bbox must have 4 comma-separated numbers, got {bbox_text!r}")
        try:
            bbox = tuple(float(p) for p in parts)
        except ValueError:
            return _error(400, "MalformedBBox", f"bbox is not numeric: {bbox_text!r}")

        date_range = None
        since = until = None
        try:
            if params.get("from"):
                since = parse_utc(params["from"])
            if params.get("to"):
                until = parse_utc(params["to"])
        except ValueError as exc:
            return _error(400, "BadDateRange", f"from/to must be ISO 8601: {exc}")
        if since is not None or until is not None:
            date_range = (since, until)

        status_filter = None
        if params.get("status"):
            status_filter = {s.strip() for s in params["status"].split(",") if s.strip()}

        try:
            records = app.state.store.query(
                bbox, date_range=date_range, status_filter=status_filter,
                road_type=params.get("road_type") or None)
        except MalformedBBox as exc:
            return _error(400, "MalformedBBox", str(exc))
        except ValueError as exc:
            return _error(400, "BadStatusFilter", str(exc))
        body = geojson_dumps(feature_collection(records))
        return Response(content=body, media_type="application/geo+json")

    @app.patch("/api/potholes/{record_id}/status")
    async def patch_status(record_id: str, request: Request):
        try:
            body = json.loads(await request.body() or b"null")
        except json.JSONDecodeError as exc:
            return _error(400, "BadRequest", f"body is not JSON: {exc}")
        new_status = body.get("status") if isinstance(body, dict) else None
        if not isinstance(new_status, str):
            return _error(400, "BadRequest", 'body must be {"status": "<new status>"}')
        try:
            record = app.state.store.set_status(record_id, new_status)
        except UnknownRecord:
            return _error(404, "UnknownRecord", f"no pothole with id {record_id!r}")
        except IllegalTransition as exc:
            return _error(409, "IllegalTransition", str(exc))
        return JSONResponse(record_to_feature(record))

    if config.static_dir is not None:
        app.mount("/ui", StaticFiles(directory=config.static_dir, html=True),
                  name="ui")

    return app


def run(config: ApiConfig) -> None:
    """Host the app with uvicorn; blocks until interrupted."""
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port)
