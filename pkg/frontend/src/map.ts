import L from "leaflet";

import type { ApiClient } from "./api";
import type { BBox } from "./filters";
import type { LayerItem } from "./cluster";
import { severityColor } from "./cluster";
import { popupHtml } from "./popup";
import type { MapViewModel } from "./viewmodel";
import type { Status } from "./filters";

// fallback view when the registry is empty: whole-world overview
const FALLBACK_CENTER: [number, number] = [20, 0];
const FALLBACK_ZOOM = 2;

function markerIcon(color: string, status: Status): L.DivIcon {
  return L.divIcon({
    className: "",
    html: `<span class="dot dot-${status}" style="--dot-color:${color}"></span>`,
    iconSize: [18, 18],
    iconAnchor: [9, 9],
    popupAnchor: [0, -9],
  });
}

function clusterIcon(count: number): L.DivIcon {
  return L.divIcon({
    className: "",
    html: `<span class="cluster-badge">${count}</span>`,
    iconSize: [34, 34],
    iconAnchor: [17, 17],
  });
}

/**
 * Thin Leaflet adapter around the view model.
 *
 * All decisions about what to draw live in the view model and cluster
 * module; this class only turns LayerItems into Leaflet markers and feeds
 * viewport changes back.
 */
export class PotholeMap {
  readonly map: L.Map;
  private readonly layer = L.layerGroup();
  private fittedOnce = false;

  constructor(
    container: HTMLElement,
    private readonly vm: MapViewModel,
    private readonly api: ApiClient,
  ) {
    this.map = L.map(container, {
      center: FALLBACK_CENTER,
      zoom: FALLBACK_ZOOM,
    });
    L.tileLayer("https://tile.openstreetmap.org/{z}/{x}/{y}.png", {
      maxZoom: 19,
      attribution: '&copy; <a href="https://www.openstreetmap.org/copyright">OpenStreetMap</a> contributors',
    }).addTo(this.map);
    this.layer.addTo(this.map);

    vm.onChange(() => this.draw());
    this.map.on("zoomend", () => {
      this.vm.setZoom(this.map.getZoom());
      void this.vm.refresh();
    });
    this.map.on("moveend", () => void this.vm.refresh());
    this.map.on("popupopen", (event) => this.wireRepairButton(event.popup));
  }

  visibleBBox(): BBox {
    const bounds = this.map.getBounds();
    return {
      minLat: bounds.getSouth(),
      minLon: bounds.getWest(),
      maxLat: bounds.getNorth(),
      maxLon: bounds.getEast(),
    };
  }

  /** One-time zoom to the data after the first non-empty refresh. */
  private fitIfFirst(): void {
    if (this.fittedOnce) return;
    const features = this.vm.features();
    if (features.length === 0) return;
    this.fittedOnce = true;
    const points = features.map((f) => {
      const [lon, lat] = f.geometry.coordinates;
      return [lat, lon] as [number, number];
    });
    this.map.fitBounds(L.latLngBounds(points), { maxZoom: 17, padding: [32, 32] });
  }

  private draw(): void {
    this.layer.clearLayers();
    for (const item of this.vm.layerItems()) {
      this.layer.addLayer(this.toMarker(item));
    }
    this.fitIfFirst();
  }

  private toMarker(item: LayerItem): L.Marker {
    if (item.kind === "cluster") {
      const marker = L.marker([item.lat, item.lon], { icon: clusterIcon(item.count) });
      marker.on("click", () => {
        this.map.setView([item.lat, item.lon], Math.min(this.map.getZoom() + 2, 18));
      });
      return marker;
    }
    const props = item.feature.properties;
    const marker = L.marker([item.lat, item.lon], {
      icon: markerIcon(severityColor(props.severity), props.status),
    });
    marker.bindPopup(popupHtml(item.feature), { maxWidth: 320 });
    return marker;
  }

  private wireRepairButton(popup: L.Popup): void {
    const root = popup.getElement();
    const button = root?.querySelector<HTMLButtonElement>("button.repair");
    if (!button) return;
    button.addEventListener("click", () => {
      const id = button.dataset.id;
      const next = button.dataset.next as Status | undefined;
      if (!id || !next) return;
      button.disabled = true;
      void this.api
        .setStatus(id, next)
        .then(() => {
          this.map.closePopup();
          return this.vm.refresh();
        })
        .catch((err) => {
          button.disabled = false;
          console.error("status update failed", err);
        });
    });
  }
}
