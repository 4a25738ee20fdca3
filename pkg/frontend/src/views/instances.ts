/** Instance table: one row per instance, one neighbor-evidence cell per probe.
 * Each cell shows the donut class distribution with the disagreement score in
 * the center and a class-stacked distance histogram; neighbor samples appear
 * in a tooltip. Rows sort by any center score; values are server numbers
 * rendered verbatim. */

import type { InstanceRow, NeighborsResponse } from "../api.js";
import { ViewFetcher } from "../api.js";
import { clear, donut, el, fmt, svg } from "../dom.js";
import { classColor } from "../palette.js";
import { subsetParam, type ViewContext } from "./common.js";

const PAGE_SIZE = 8;

export class InstancesView {
  readonly root: HTMLElement;
  private fetcher = new ViewFetcher();
  private body: HTMLElement;
  private sortSelect: HTMLSelectElement;
  private orderButton: HTMLButtonElement;
  private pageLabel: HTMLElement;
  private probes: string[] = [];
  private tooltip: HTMLElement;
  private pendingFills: Promise<void>[] = [];

  constructor(container: HTMLElement, private ctx: ViewContext) {
    this.root = el("section", { class: "panel wide", "data-view": "instances" });
    this.sortSelect = el("select", { "data-role": "sort" });
    this.sortSelect.addEventListener("change", () => {
      this.ctx.store.update({ sortKey: this.sortSelect.value, page: 0 });
      void this.ctx.hooks.refresh();
    });
    this.orderButton = el("button", { text: "↓", title: "toggle sort order" });
    this.orderButton.addEventListener("click", () => {
      const order = this.ctx.store.get().sortOrder === "asc" ? "desc" : "asc";
      this.ctx.store.update({ sortOrder: order });
      void this.ctx.hooks.refresh();
    });
    const prev = el("button", { text: "‹", "data-role": "prev" });
    const next = el("button", { text: "›", "data-role": "next" });
    prev.addEventListener("click", () => this.turnPage(-1));
    next.addEventListener("click", () => this.turnPage(1));
    this.pageLabel = el("span", { class: "caption", "data-role": "page" });
    this.root.append(
      el("header", {}, [
        el("h2", { text: "Instances" }),
        this.sortSelect,
        this.orderButton,
        prev,
        this.pageLabel,
        next,
      ]),
    );
    this.body = el("div", { class: "body" });
    this.root.append(this.body);
    this.tooltip = el("div", { class: "tooltip", style: "display:none" });
    this.root.append(this.tooltip);
    container.append(this.root);
  }

  setProbes(probes: string[]): void {
    this.probes = probes;
    clear(this.sortSelect);
    const keys = [
      "instance_id",
      "data_kdn",
      "model_difficulty",
      "human_difficulty",
      "pd",
      ...probes.map((probe) => `kdn:${probe}`),
    ];
    for (const key of keys) {
      this.sortSelect.append(el("option", { value: key, text: key }));
    }
    this.sortSelect.value = this.ctx.store.get().sortKey;
  }

  private turnPage(delta: number): void {
    const page = Math.max(0, this.ctx.store.get().page + delta);
    this.ctx.store.update({ page });
    void this.ctx.hooks.refresh();
  }

  async refresh(): Promise<void> {
    const state = this.ctx.store.get();
    const out = await this.fetcher.run(() =>
      this.ctx.api.instances({
        subset: subsetParam(this.ctx.store),
        sort_key: state.sortKey,
        order: state.sortOrder,
        page: state.page,
        page_size: PAGE_SIZE,
      }),
    );
    if (!out) return;
    clear(this.body);
    this.root.setAttribute("data-count", String(out.total));
    this.pageLabel.textContent = `page ${out.page + 1} / ${Math.max(1, Math.ceil(out.total / out.page_size))}`;
    const table = el("table", { class: "instances" });
    const head = el("tr", {}, [
      el("th", { text: "instance" }),
      el("th", { text: "difficulty" }),
    ]);
    for (const probe of this.probes) {
      head.append(el("th", { text: probe }));
    }
    table.append(head);
    this.pendingFills = [];
    for (const row of out.rows) {
      table.append(this.renderRow(row));
    }
    this.body.append(table);
    await Promise.all(this.pendingFills);
  }

  private renderRow(row: InstanceRow): HTMLElement {
    const tr = el("tr", { "data-instance": row.instance_id });
    const idCell = el("td", {}, [
      el("div", { class: "mono", text: row.instance_id }),
      el("div", {}, [
        el("span", { class: "chip", style: `background:${classColor(row.actual)}`, title: `actual ${row.actual}` }),
        el("span", { text: "→" }),
        el("span", { class: "chip", style: `background:${classColor(row.predicted)}`, title: `predicted ${row.predicted}` }),
        el("span", { class: row.correct ? "ok" : "bad", text: row.correct ? " ✓" : " ✗" }),
      ]),
      el("div", { class: "caption", text: `pattern ${row.pattern}${row.never_aligned ? " (never aligned)" : ""}` }),
    ]);
    if (row.image) {
      idCell.prepend(el("img", { src: this.ctx.api.imageUrl(row.instance_id), class: "thumb", alt: row.instance_id }));
    }
    tr.append(idCell);
    tr.append(
      el("td", {}, [
        el("div", { class: "mono", "data-role": "scores", text:
          `data ${fmt(row.data_kdn)}  model ${fmt(row.model_difficulty)}  human ${fmt(row.human_difficulty)}` }),
        el("div", { class: "caption", text: `depth ${row.pd}` }),
      ]),
    );
    for (const probe of this.probes) {
      const cell = el("td", { class: "evidence", "data-probe": probe });
      cell.append(el("span", { class: "caption", text: "…" }));
      tr.append(cell);
      this.pendingFills.push(this.fillEvidence(cell, row, probe));
    }
    return tr;
  }

  private async fillEvidence(cell: HTMLElement, row: InstanceRow, probe: string): Promise<void> {
    let evidence: NeighborsResponse;
    try {
      evidence = await this.ctx.api.neighbors(row.instance_id, probe, undefined, subsetParam(this.ctx.store));
    } catch {
      clear(cell);
      cell.append(el("span", { class: "caption", text: "n/a" }));
      return;
    }
    clear(cell);
    const wrap = el("div", { class: "evidence-wrap" });

    const donutPlot = svg("svg", { viewBox: "-20 -20 40 40", width: 40, height: 40, "data-role": "donut" });
    for (const segment of donut(evidence.class_counts, 18, 11, classColor)) {
      donutPlot.append(segment);
    }
    donutPlot.append(
      svg("text", { x: 0, y: 3, class: "donut-score", text: fmt(evidence.center_score, 2), "data-role": "center-score" }),
    );
    wrap.append(donutPlot);

    const bins = evidence.histogram.counts.length;
    const hist = svg("svg", { viewBox: `0 0 ${bins * 5} 24`, width: bins * 5, height: 24, "data-role": "distance-hist" });
    const peak = Math.max(1, ...evidence.histogram.counts.map((bin) => bin.reduce((a, b) => a + b, 0)));
    evidence.histogram.counts.forEach((perClass, bin) => {
      let y = 24;
      perClass.forEach((count, classIndex) => {
        if (count === 0) return;
        const h = (count / peak) * 22;
        y -= h;
        hist.append(
          svg("rect", { x: bin * 5, y, width: 4, height: h, fill: classColor(classIndex), "data-bin": bin }),
        );
      });
    });
    wrap.append(hist);

    wrap.addEventListener("mouseenter", () => this.showTooltip(row.instance_id, evidence));
    wrap.addEventListener("mouseleave", () => {
      this.tooltip.style.display = "none";
      this.ctx.store.update({ hoverTarget: null });
    });
    cell.append(wrap);
  }

  /** Neighbor samples (ids, distances, thumbnails) for the hovered cell. */
  private showTooltip(instanceId: string, evidence: NeighborsResponse): void {
    this.ctx.store.update({ hoverTarget: `${instanceId}@${evidence.layer}` });
    clear(this.tooltip);
    this.tooltip.append(el("div", { class: "mono", text: `${instanceId} @ ${evidence.layer}` }));
    for (const neighbor of evidence.neighbors) {
      const line = el("div", { class: "neighbor-line" }, [
        el("span", { class: "chip", style: `background:${classColor(neighbor.label)}` }),
        el("span", { class: "mono", text: `${neighbor.instance_id} d=${fmt(neighbor.distance, 3)}` }),
      ]);
      if (neighbor.image) {
        line.append(el("img", { src: this.ctx.api.imageUrl(neighbor.instance_id), class: "thumb", alt: neighbor.instance_id }));
      }
      this.tooltip.append(line);
    }
    this.tooltip.style.display = "block";
  }
}
