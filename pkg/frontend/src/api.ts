import type { BBox, FilterState, Status } from "./filters";
import { toQueryParams } from "./filters";

export type Severity = "low" | "medium" | "high";

export interface PotholeProperties {
  id: string;
  severity: Severity;
  status: Status;
  first_seen: string;
  last_seen: string;
  observation_count: number;
  road_meta: Record<string, string>;
  evidence_frame_b64: string | null;
}

export interface PotholeFeature {
  type: "Feature";
  geometry: {
    type: "Point";
    coordinates: [number, number]; // [lon, lat]
  };
  properties: PotholeProperties;
}

export interface FeatureCollection {
  type: "FeatureCollection";
  features: PotholeFeature[];
}

export interface SessionDelta {
  created: number;
  updated: number;
  fixed: number;
  reopened: number;
}

export interface SessionReport {
  session_id: string;
  offset_s: number;
  delta: SessionDelta;
  diagnostics: Record<string, number>;
}

export interface ApiErrorBody {
  error: string;
  message: string;
  part?: string;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: ApiErrorBody,
  ) {
    super(`${body.error}: ${body.message}`);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function errorBody(res: Response): Promise<ApiErrorBody> {
  try {
    const body = (await res.json()) as Partial<ApiErrorBody>;
    if (body && typeof body.error === "string" && typeof body.message === "string") {
      return body as ApiErrorBody;
    }
  } catch {
    // fall through to the synthetic body
  }
  return { error: `HTTP ${res.status}`, message: res.statusText || "request failed" };
}

/**
 * Thin typed client for the registry service.
 *
 * Pothole queries carry a ticket number. A response is applied only when no
 * newer query has landed in the meantime, so a slow response from an old
 * viewport can never overwrite fresher data.
 */
export class ApiClient {
  private querySeq = 0;
  private queryApplied = 0;

  constructor(
    private readonly baseUrl = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  /** GET /api/potholes; resolves null when the response arrived stale. */
  async fetchPotholes(bbox: BBox, filters: FilterState): Promise<FeatureCollection | null> {
    const ticket = ++this.querySeq;
    const params = toQueryParams(bbox, filters);
    const res = await this.fetchFn(`${this.baseUrl}/api/potholes?${params.toString()}`);
    if (!res.ok) throw new ApiError(res.status, await errorBody(res));
    const collection = (await res.json()) as FeatureCollection;
    if (ticket <= this.queryApplied) return null;
    this.queryApplied = ticket;
    return collection;
  }

  /** POST /api/sessions with multipart form data. */
  async uploadSession(form: FormData): Promise<SessionReport> {
    const res = await this.fetchFn(`${this.baseUrl}/api/sessions`, {
      method: "POST",
      body: form,
    });
    if (!res.ok) throw new ApiError(res.status, await errorBody(res));
    return (await res.json()) as SessionReport;
  }

  /** PATCH /api/potholes/{id}/status for repair bookkeeping. */
  async setStatus(id: string, status: Status): Promise<PotholeFeature> {
    const res = await this.fetchFn(`${this.baseUrl}/api/potholes/${encodeURIComponent(id)}/status`, {
      method: "PATCH",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ status }),
    });
    if (!res.ok) throw new ApiError(res.status, await errorBody(res));
    return (await res.json()) as PotholeFeature;
  }
}
