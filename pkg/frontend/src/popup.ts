import type { PotholeFeature } from "./api";
import type { Status } from "./filters";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function evidenceSrc(b64: string): string {
  // sniff the container from the base64 prefix; PNG and JPEG are what the
  // pipeline stores, anything else is displayed as PNG and may just not render
  let mime = "image/png";
  if (b64.startsWith("/9j/")) mime = "image/jpeg";
  else if (b64.startsWith("R0lGOD")) mime = "image/gif";
  return `data:${mime};base64,${b64}`;
}

export interface RepairAction {
  next: Status;
  label: string;
}

/** What the repair button should do for a record in the given status. */
export function repairAction(status: Status): RepairAction {
  if (status === "fixed") return { next: "reopened", label: "reopen" };
  return { next: "fixed", label: "mark fixed" };
}

/**
 * Render one registry record as popup HTML.
 *
 * All dynamic strings are escaped; evidence is inlined as a data URI so the
 * popup works offline and without extra requests.
 */
export function popupHtml(feature: PotholeFeature): string {
  const p = feature.properties;
  const [lon, lat] = feature.geometry.coordinates;
  const image = p.evidence_frame_b64
    ? `<img class="evidence" src="${evidenceSrc(p.evidence_frame_b64)}" alt="evidence frame">`
    : `<div class="evidence evidence-placeholder">no evidence frame</div>`;
  const metaRows = Object.entries(p.road_meta ?? {})
    .map(([key, value]) => `<tr><th>${escapeHtml(key)}</th><td>${escapeHtml(String(value))}</td></tr>`)
    .join("");
  const action = repairAction(p.status);
  return [
    `<article class="pothole-popup" data-id="${escapeHtml(p.id)}">`,
    image,
    `<h3><span class="severity severity-${escapeHtml(p.severity)}">${escapeHtml(p.severity)}</span> severity</h3>`,
    `<table class="facts">`,
    `<tr><th>status</th><td class="status">${escapeHtml(p.status)}</td></tr>`,
    `<tr><th>first seen</th><td class="first-seen">${escapeHtml(p.first_seen)}</td></tr>`,
    `<tr><th>last seen</th><td class="last-seen">${escapeHtml(p.last_seen)}</td></tr>`,
    `<tr><th>observations</th><td>${p.observation_count}</td></tr>`,
    `<tr><th>location</th><td>${lat.toFixed(5)}, ${lon.toFixed(5)}</td></tr>`,
    metaRows,
    `</table>`,
    `<button type="button" class="repair" data-id="${escapeHtml(p.id)}" data-next="${action.next}">${action.label}</button>`,
    `</article>`,
  ].join("");
}
