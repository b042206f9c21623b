export type Status = "open" | "fixed" | "reopened";

/** Every status the registry can report, in legend order. */
export const STATUS_LEGEND: readonly Status[] = ["open", "fixed", "reopened"];

export interface BBox {
  minLat: number;
  minLon: number;
  maxLat: number;
  maxLon: number;
}

export interface FilterState {
  statuses: Set<Status>;
  from?: string;
  to?: string;
  roadType?: string;
}

/** Fixed records stay hidden until the operator opts in. */
export function defaultFilters(): FilterState {
  return { statuses: new Set<Status>(["open", "reopened"]) };
}

/**
 * Translate map state into the registry query string.
 *
 * Each control maps to exactly one parameter and nothing else ever goes on
 * the wire, so the network tab reads the same as the sidebar. An empty
 * status selection is handled by the caller (no request at all); sending
 * an empty status list would mean "no filter" to the server.
 */
export function toQueryParams(bbox: BBox, filters: FilterState): URLSearchParams {
  const params = new URLSearchParams();
  params.set("bbox", [bbox.minLat, bbox.minLon, bbox.maxLat, bbox.maxLon].join(","));
  if (filters.statuses.size > 0 && filters.statuses.size < STATUS_LEGEND.length) {
    const selected = STATUS_LEGEND.filter((s) => filters.statuses.has(s));
    params.set("status", selected.join(","));
  }
  if (filters.from) params.set("from", filters.from);
  if (filters.to) params.set("to", filters.to);
  if (filters.roadType) params.set("road_type", filters.roadType);
  return params;
}
