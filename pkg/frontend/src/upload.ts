import type { ApiClient, SessionDelta } from "./api";
import { ApiError } from "./api";

export interface UploadInputs {
  frames: HTMLInputElement;
  detections: HTMLInputElement;
  gps: HTMLInputElement;
  evidence: HTMLInputElement;
  offsetS: HTMLInputElement;
  roadType: HTMLInputElement;
}

export interface Toast {
  show(kind: "ok" | "error", text: string): void;
}

const REQUIRED_PARTS = ["frames", "detections", "gps"] as const;

export function formatDelta(delta: SessionDelta): string {
  return `created=${delta.created} updated=${delta.updated} fixed=${delta.fixed} reopened=${delta.reopened}`;
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    if (err.status === 413) return `upload too large: ${err.body.message}`;
    const part = err.body.part ? ` (${err.body.part})` : "";
    return `${err.body.error}${part}: ${err.body.message}`;
  }
  return String(err);
}

/**
 * Wire the session upload form.
 *
 * Missing required files are rejected client-side before any bytes move.
 * On success the toast shows the server's created/updated/fixed/reopened
 * delta and onSuccess re-queries the map; the page itself never reloads.
 * Returns the submit handler so tests can invoke it directly.
 */
export function wireUpload(
  api: ApiClient,
  form: HTMLFormElement,
  inputs: UploadInputs,
  toast: Toast,
  onSuccess: () => Promise<void> | void,
): (event?: Event) => Promise<void> {
  const handler = async (event?: Event): Promise<void> => {
    event?.preventDefault();

    const missing = REQUIRED_PARTS.filter((name) => !inputs[name].files?.length);
    if (missing.length > 0) {
      toast.show("error", `missing required file${missing.length > 1 ? "s" : ""}: ${missing.join(", ")}`);
      return;
    }

    const data = new FormData();
    for (const name of REQUIRED_PARTS) {
      const file = inputs[name].files?.[0];
      if (file) data.append(name, file, file.name);
    }
    for (const file of Array.from(inputs.evidence.files ?? [])) {
      data.append("evidence", file, file.name);
    }
    const offset = inputs.offsetS.value.trim();
    if (offset !== "") data.append("offset_s", offset);
    const roadType = inputs.roadType.value.trim();
    if (roadType !== "") data.append("road_meta", JSON.stringify({ road_type: roadType }));

    toast.show("ok", "uploading session");
    try {
      const report = await api.uploadSession(data);
      toast.show("ok", `session ${report.session_id}: ${formatDelta(report.delta)}`);
      await onSuccess();
    } catch (err) {
      toast.show("error", describeError(err));
    }
  };
  form.addEventListener("submit", (event) => void handler(event));
  return handler;
}
