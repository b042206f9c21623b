import { readFileSync } from "node:fs";
import { resolve } from "node:path";

import type { FeatureCollection, PotholeFeature, Severity } from "../src/api";

/** Registry export frozen from a real ingest of the desk fixture. */
export function loadRegistry(): FeatureCollection {
  const raw = readFileSync(resolve(process.cwd(), "tests/fixtures/registry.geojson"), "utf-8");
  return JSON.parse(raw) as FeatureCollection;
}

export function jsonResponse(body: unknown, status = 200, contentType = "application/json"): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": contentType },
  });
}

export function makeFeature(
  id: string,
  lat: number,
  lon: number,
  overrides: Partial<PotholeFeature["properties"]> = {},
): PotholeFeature {
  return {
    type: "Feature",
    geometry: { type: "Point", coordinates: [lon, lat] },
    properties: {
      id,
      severity: "medium" as Severity,
      status: "open",
      first_seen: "2025-03-01T06:30:00Z",
      last_seen: "2025-03-01T06:31:40Z",
      observation_count: 4,
      road_meta: {},
      evidence_frame_b64: null,
      ...overrides,
    },
  };
}

export function collectionOf(...features: PotholeFeature[]): FeatureCollection {
  return { type: "FeatureCollection", features };
}
