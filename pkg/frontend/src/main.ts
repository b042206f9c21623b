import "leaflet/dist/leaflet.css";
import "./style.css";

import { ApiClient } from "./api";
import type { BBox, Status } from "./filters";
import { STATUS_LEGEND } from "./filters";
import { severityColor } from "./cluster";
import type { Toast } from "./upload";
import { wireUpload } from "./upload";
import { MapViewModel } from "./viewmodel";
import { PotholeMap } from "./map";

const WORLD: BBox = { minLat: -90, minLon: -180, maxLat: 90, maxLon: 180 };

function statusRow(status: Status, checked: boolean): string {
  return [
    `<label class="status-row">`,
    `<input type="checkbox" name="status" value="${status}" ${checked ? "checked" : ""}>`,
    `<span class="dot dot-${status}" style="--dot-color:#757575"></span>`,
    `<span>${status}</span>`,
    `</label>`,
  ].join("");
}

function buildLayout(root: HTMLElement): void {
  root.innerHTML = `
    <div class="layout">
      <aside class="sidebar">
        <h1>Pothole Registry</h1>

        <section class="panel">
          <h2>Status</h2>
          <div id="legend">
            ${STATUS_LEGEND.map((s) => statusRow(s, s !== "fixed")).join("")}
          </div>
        </section>

        <section class="panel">
          <h2>Severity</h2>
          <div class="severity-key">
            ${(["low", "medium", "high"] as const)
              .map((s) => `<span class="key-item"><span class="dot" style="--dot-color:${severityColor(s)}"></span>${s}</span>`)
              .join("")}
          </div>
        </section>

        <section class="panel">
          <h2>Filters</h2>
          <label>seen after <input type="datetime-local" id="filter-from"></label>
          <label>seen before <input type="datetime-local" id="filter-to"></label>
          <label>road type <input type="text" id="filter-road-type" placeholder="any"></label>
          <button type="button" id="apply-filters">apply</button>
        </section>

        <section class="panel">
          <h2>Upload session</h2>
          <form id="upload-form">
            <label>frame manifest <input type="file" id="upload-frames" accept=".csv"></label>
            <label>detections <input type="file" id="upload-detections" accept=".csv"></label>
            <label>GPS log <input type="file" id="upload-gps" accept=".csv,.gpx"></label>
            <label>evidence frames <input type="file" id="upload-evidence" multiple></label>
            <label>clock offset (s) <input type="text" id="upload-offset" placeholder="auto"></label>
            <label>road type <input type="text" id="upload-road-type" placeholder="optional"></label>
            <button type="submit">upload</button>
          </form>
        </section>
      </aside>
      <div id="map"></div>
    </div>
    <div id="toast" hidden></div>
  `;
}

function makeToast(): Toast {
  const node = document.querySelector<HTMLDivElement>("#toast");
  let timer: ReturnType<typeof setTimeout> | undefined;
  return {
    show(kind, text) {
      if (!node) return;
      node.textContent = text;
      node.className = `toast toast-${kind}`;
      node.hidden = false;
      if (timer) clearTimeout(timer);
      timer = setTimeout(() => {
        node.hidden = true;
      }, 6000);
    },
  };
}

function pick<T extends HTMLElement>(selector: string): T {
  const node = document.querySelector<T>(selector);
  if (!node) throw new Error(`missing element: ${selector}`);
  return node;
}

function main(): void {
  const root = pick<HTMLDivElement>("#app");
  buildLayout(root);

  const api = new ApiClient();
  let widget: PotholeMap | null = null;
  const vm = new MapViewModel(api, () => (widget ? widget.visibleBBox() : WORLD));
  widget = new PotholeMap(pick<HTMLDivElement>("#map"), vm, api);
  const toast = makeToast();

  for (const box of document.querySelectorAll<HTMLInputElement>('#legend input[name="status"]')) {
    box.addEventListener("change", () => {
      const value = box.value as Status;
      if (box.checked) vm.filters.statuses.add(value);
      else vm.filters.statuses.delete(value);
      void vm.refresh();
    });
  }

  pick<HTMLButtonElement>("#apply-filters").addEventListener("click", () => {
    const from = pick<HTMLInputElement>("#filter-from").value;
    const to = pick<HTMLInputElement>("#filter-to").value;
    const roadType = pick<HTMLInputElement>("#filter-road-type").value.trim();
    vm.filters.from = from || undefined;
    vm.filters.to = to || undefined;
    vm.filters.roadType = roadType || undefined;
    void vm.refresh();
  });

  wireUpload(
    api,
    pick<HTMLFormElement>("#upload-form"),
    {
      frames: pick<HTMLInputElement>("#upload-frames"),
      detections: pick<HTMLInputElement>("#upload-detections"),
      gps: pick<HTMLInputElement>("#upload-gps"),
      evidence: pick<HTMLInputElement>("#upload-evidence"),
      offsetS: pick<HTMLInputElement>("#upload-offset"),
      roadType: pick<HTMLInputElement>("#upload-road-type"),
    },
    toast,
    () => vm.refresh(),
  );

  void vm.refresh();
}

main();
