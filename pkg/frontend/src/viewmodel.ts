import type { ApiClient, FeatureCollection, PotholeFeature } from "./api";
import type { BBox, FilterState } from "./filters";
import { defaultFilters } from "./filters";
import type { LayerItem } from "./cluster";
import { clusterFeatures, FULL_DETAIL_ZOOM } from "./cluster";

const EMPTY: FeatureCollection = { type: "FeatureCollection", features: [] };

/**
 * Map state minus the map widget, so rendering decisions stay testable.
 *
 * The view model owns the last applied feature collection, the filter
 * state, and the zoom level. Listeners fire whenever any of those change;
 * the widget redraws from layerItems().
 */
export class MapViewModel {
  filters: FilterState = defaultFilters();
  zoom = FULL_DETAIL_ZOOM;

  private collection: FeatureCollection = EMPTY;
  private listeners: Array<() => void> = [];

  constructor(
    private readonly api: ApiClient,
    private readonly visibleBBox: () => BBox,
  ) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  features(): readonly PotholeFeature[] {
    return this.collection.features;
  }

  layerItems(): LayerItem[] {
    return clusterFeatures(this.collection.features, this.zoom);
  }

  setZoom(zoom: number): void {
    if (zoom === this.zoom) return;
    this.zoom = zoom;
    this.notify();
  }

  /** Re-query the registry for the current viewport and filters. */
  async refresh(): Promise<void> {
    if (this.filters.statuses.size === 0) {
      // nothing selected means nothing shown; the server would treat an
      // empty status list as "no filter", so short-circuit here
      this.collection = EMPTY;
      this.notify();
      return;
    }
    const fresh = await this.api.fetchPotholes(this.visibleBBox(), this.filters);
    if (fresh === null) return; // stale response, a newer one already landed
    this.collection = fresh;
    this.notify();
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }
}
