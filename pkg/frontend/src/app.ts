/** Application shell: builds the coordinated views and keeps them on the same
 * active subset. A selection in any view posts a descriptor, the server
 * answers with the authoritative subset, and every view re-renders from it.
 */

import { ApiClient, type Descriptor, type StatusResponse } from "./api.js";
import { clear, el } from "./dom.js";
import { classColor } from "./palette.js";
import { Store } from "./state.js";
import type { SelectHooks } from "./views/common.js";
import { ConfusionView } from "./views/confusion.js";
import { FlowView } from "./views/flow.js";
import { InstancesView } from "./views/instances.js";
import { PcpView } from "./views/pcp.js";
import { ProjectionView } from "./views/projection.js";
import { SubsetPanel } from "./views/subsets.js";
import { SummaryView } from "./views/summary.js";

export class App {
  readonly api: ApiClient;
  readonly store = new Store();
  readonly summary: SummaryView;
  readonly confusion: ConfusionView;
  readonly projection: ProjectionView;
  readonly flow: FlowView;
  readonly pcp: PcpView;
  readonly instances: InstancesView;
  readonly subsets: SubsetPanel;
  private header: HTMLElement;
  private banner: HTMLElement;
  private inflight = new Set<Promise<unknown>>();
  status: StatusResponse | null = null;

  constructor(root: HTMLElement, apiBase: string) {
    this.api = new ApiClient(apiBase);
    clear(root);
    this.banner = el("div", { class: "banner", style: "display:none", "data-role": "banner" });
    this.header = el("header", { class: "app-header", "data-role": "status" });
    root.append(this.banner, this.header);
    const grid = el("main", { class: "grid" });
    root.append(grid);

    const hooks: SelectHooks = {
      select: (descriptor, name) => this.track(this.select(descriptor, name)),
      activate: (subsetId) => this.track(this.activate(subsetId)),
      refresh: () => this.track(this.refreshAll()),
      track: (work) => this.track(work),
    };
    const ctx = { api: this.api, store: this.store, hooks };
    this.summary = new SummaryView(grid, ctx);
    this.projection = new ProjectionView(grid, ctx);
    this.confusion = new ConfusionView(grid, ctx);
    this.subsets = new SubsetPanel(grid, ctx);
    this.flow = new FlowView(grid, ctx);
    this.pcp = new PcpView(grid, ctx);
    this.instances = new InstancesView(grid, ctx);
  }

  private track<T>(work: Promise<T>): Promise<T> {
    this.inflight.add(work);
    void work.catch((error) => this.showError(error)).finally(() => this.inflight.delete(work));
    return work;
  }

  /** Resolves once every pending fetch/render chain has settled. */
  async whenIdle(): Promise<void> {
    while (this.inflight.size > 0) {
      await Promise.allSettled([...this.inflight]);
    }
  }

  private showError(error: unknown): void {
    this.banner.textContent = `request failed: ${error instanceof Error ? error.message : String(error)}`;
    this.banner.style.display = "block";
    setTimeout(() => {
      this.banner.style.display = "none";
    }, 4000);
  }

  async init(): Promise<void> {
    let status = await this.api.status();
    if (status.state !== "ready") {
      await this.api.compute({});
      status = await this.api.status();
    }
    this.status = status;
    this.store.update({ activeSubsetSize: status.n_profiled ?? null, revision: status.revision });
    this.summary.setLayers(status.layers.length);
    this.projection.setSources(status.layers);
    this.instances.setProbes(status.probes);
    this.renderHeader(status);
    await this.loadClassMap();
    await this.refreshAll();
  }

  /** Instance -> actual class, used for consistent point coloring. */
  private async loadClassMap(): Promise<void> {
    const total = this.status?.n_profiled ?? 0;
    const page = await this.api.instances({ page: 0, page_size: Math.max(total, 1) });
    this.projection.setClasses(new Map(page.rows.map((row) => [row.instance_id, row.actual])));
  }

  private renderHeader(status: StatusResponse): void {
    clear(this.header);
    this.header.append(
      el("h1", { text: `difflens — ${status.dataset_name}` }),
      el("span", { class: "caption", text:
        `${status.n_train} train / ${status.n_test} test · ${status.layers.length} layers · ` +
        `accuracy ${(100 * (status.accuracy ?? 0)).toFixed(2)}%` }),
    );
    const legend = el("span", { class: "legend" });
    status.class_names.forEach((name, index) => {
      legend.append(el("span", { class: "chip", style: `background:${classColor(index)}`, title: name }));
      legend.append(el("span", { class: "caption", text: name + " " }));
    });
    this.header.append(legend);
    this.header.append(
      el("span", { class: "active-subset", "data-role": "active-subset", text: this.activeLabel() }),
    );
  }

  private activeLabel(): string {
    const state = this.store.get();
    const size = state.activeSubsetSize;
    return `active: ${state.activeSubset}${size !== null ? ` (${size})` : ""}`;
  }

  async select(descriptor: Descriptor, name?: string): Promise<void> {
    const out = await this.api.createSubset(descriptor, name);
    if (!out.subset) return;
    this.store.update({
      activeSubset: out.subset.id,
      activeSubsetSize: out.subset.size,
      revision: out.revision,
      page: 0,
    });
    await this.refreshAll();
  }

  async activate(subsetId: string): Promise<void> {
    if (subsetId === "all") {
      this.store.update({
        activeSubset: "all",
        activeSubsetSize: this.status?.n_profiled ?? null,
        page: 0,
        brush: {},
      });
    } else {
      const listing = await this.api.subsets();
      const entry = listing.subsets.find((subset) => subset.id === subsetId);
      if (!entry) throw new Error(`unknown subset ${subsetId}`);
      this.store.update({
        activeSubset: subsetId,
        activeSubsetSize: entry.size,
        revision: listing.revision,
        page: 0,
      });
    }
    await this.refreshAll();
  }

  async refreshAll(): Promise<void> {
    const status = this.header.querySelector('[data-role="active-subset"]');
    if (status) status.textContent = this.activeLabel();
    await Promise.all([
      this.summary.refresh(),
      this.confusion.refresh(),
      this.projection.refresh(),
      this.flow.refresh(),
      this.pcp.refresh(),
      this.instances.refresh(),
      this.subsets.refresh(),
    ]);
  }
}
