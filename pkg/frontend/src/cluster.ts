import type { PotholeFeature, Severity } from "./api";

/** At or above this zoom every record gets its own marker. */
export const FULL_DETAIL_ZOOM = 16;

/** Screen-space capture radius for aggregation badges. */
export const CLUSTER_RADIUS_PX = 48;

// web mercator ground resolution at the equator, zoom 0
const EQUATOR_M_PER_PX_Z0 = 156543.03392;

const EARTH_RADIUS_M = 6371000;

export interface SingleMarker {
  kind: "single";
  lat: number;
  lon: number;
  feature: PotholeFeature;
}

export interface ClusterBadge {
  kind: "cluster";
  lat: number;
  lon: number;
  count: number;
  features: PotholeFeature[];
}

export type LayerItem = SingleMarker | ClusterBadge;

export function metersPerPixel(zoom: number, lat: number): number {
  return (EQUATOR_M_PER_PX_Z0 * Math.cos((lat * Math.PI) / 180)) / 2 ** zoom;
}

function haversineM(lat1: number, lon1: number, lat2: number, lon2: number): number {
  const rad = Math.PI / 180;
  const dLat = (lat2 - lat1) * rad;
  const dLon = (lon2 - lon1) * rad;
  const a =
    Math.sin(dLat / 2) ** 2 +
    Math.cos(lat1 * rad) * Math.cos(lat2 * rad) * Math.sin(dLon / 2) ** 2;
  return 2 * EARTH_RADIUS_M * Math.asin(Math.sqrt(a));
}

function isFiniteNumber(value: unknown): value is number {
  return typeof value === "number" && Number.isFinite(value);
}

/** Structural check; anything that fails is unrenderable, not fatal. */
export function isRenderable(value: unknown): value is PotholeFeature {
  if (typeof value !== "object" || value === null) return false;
  const f = value as Record<string, unknown>;
  const geometry = f.geometry as Record<string, unknown> | undefined;
  if (!geometry || geometry.type !== "Point") return false;
  const coords = geometry.coordinates;
  if (!Array.isArray(coords) || coords.length !== 2) return false;
  const [lon, lat] = coords;
  if (!isFiniteNumber(lon) || !isFiniteNumber(lat)) return false;
  if (lat < -90 || lat > 90 || lon < -180 || lon > 180) return false;
  const props = f.properties as Record<string, unknown> | undefined;
  if (!props || typeof props.id !== "string" || props.id.length === 0) return false;
  return true;
}

function single(feature: PotholeFeature): SingleMarker {
  const [lon, lat] = feature.geometry.coordinates;
  return { kind: "single", lat, lon, feature };
}

/**
 * Greedy screen-space aggregation.
 *
 * Below FULL_DETAIL_ZOOM, features within CLUSTER_RADIUS_PX of an earlier
 * feature join its badge; the badge sits on the first member. At full
 * detail every feature is its own marker, so marker count equals feature
 * count there. Malformed features are logged and skipped so one bad record
 * never blanks the map.
 */
export function clusterFeatures(features: readonly unknown[], zoom: number): LayerItem[] {
  const usable: PotholeFeature[] = [];
  for (const candidate of features) {
    if (isRenderable(candidate)) {
      usable.push(candidate);
    } else {
      console.warn("skipping malformed feature", candidate);
    }
  }
  if (zoom >= FULL_DETAIL_ZOOM) return usable.map(single);

  const buckets: { lat: number; lon: number; members: PotholeFeature[] }[] = [];
  for (const feature of usable) {
    const [lon, lat] = feature.geometry.coordinates;
    const radiusM = CLUSTER_RADIUS_PX * metersPerPixel(zoom, lat);
    const hit = buckets.find((b) => haversineM(b.lat, b.lon, lat, lon) <= radiusM);
    if (hit) {
      hit.members.push(feature);
    } else {
      buckets.push({ lat, lon, members: [feature] });
    }
  }
  return buckets.map((b) => {
    const first = b.members[0];
    if (b.members.length === 1 && first) return single(first);
    return { kind: "cluster", lat: b.lat, lon: b.lon, count: b.members.length, features: b.members };
  });
}

// palette matches the report figures
const SEVERITY_COLORS: Record<Severity, string> = {
  low: "#4caf50",
  medium: "#ff9800",
  high: "#d32f2f",
};

export function severityColor(severity: Severity): string {
  return SEVERITY_COLORS[severity] ?? "#757575";
}
