/** Difficulty summary: pairwise heatmap with marginals plus the third
 * perspective's histogram; rectangular brushes become brush descriptors. */

import type { PairName, SummaryResponse } from "../api.js";
import { ViewFetcher } from "../api.js";
import { clear, el, svg } from "../dom.js";
import { heatColor } from "../palette.js";
import type { BrushIntervals } from "../state.js";
import { subsetParam, type ViewContext } from "./common.js";

const PAIRS: PairName[] = ["data_model", "data_human", "model_human"];
const CELL = 22;

interface DragState {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export class SummaryView {
  readonly root: HTMLElement;
  private fetcher = new ViewFetcher();
  private body: HTMLElement;
  private drag: DragState | null = null;
  private lastSummary: SummaryResponse | null = null;
  private layers = 1;

  constructor(container: HTMLElement, private ctx: ViewContext) {
    this.root = el("section", { class: "panel", "data-view": "summary" });
    const pairSelect = el("select", { "data-role": "pair" });
    for (const pair of PAIRS) {
      pairSelect.append(el("option", { value: pair, text: pair.replace("_", " / ") }));
    }
    pairSelect.value = ctx.store.get().pair;
    pairSelect.addEventListener("change", () => {
      ctx.store.update({ pair: pairSelect.value as PairName });
      void ctx.hooks.refresh();
    });
    this.root.append(el("header", {}, [el("h2", { text: "Difficulty summary" }), pairSelect]));
    this.body = el("div", { class: "body" });
    this.root.append(this.body);
    container.append(this.root);
  }

  setLayers(layers: number): void {
    this.layers = layers;
  }

  /** Value interval covered by heatmap bins [b0, b1] on one perspective axis. */
  private binInterval(perspective: string, b0: number, b1: number, bins: number): [number, number] {
    if (perspective === "model") {
      // depth axis: bin b holds exactly the value b / L
      return [b0 / this.layers, b1 / this.layers];
    }
    const lo = b0 / bins;
    const hi = b1 + 1 >= bins ? 1.0 : (b1 + 1) / bins - 1e-9;
    return [lo, hi];
  }

  /** Programmatic form of the heatmap/marginal brush; pointer handlers call this. */
  async applyBrush(intervals: BrushIntervals, name?: string): Promise<void> {
    this.ctx.store.update({ brush: { ...this.ctx.store.get().brush, ...intervals } });
    const brush = this.ctx.store.get().brush;
    await this.ctx.hooks.select({ kind: "brush", ...brush }, name ?? "brush");
  }

  clearBrush(): void {
    this.ctx.store.update({ brush: {} });
  }

  async refresh(): Promise<void> {
    const pair = this.ctx.store.get().pair;
    const subset = subsetParam(this.ctx.store);
    const thirdPerspective = ["data", "model", "human"].find((p) => !pair.includes(p))!;
    const thirdPair = PAIRS.find((p) => p.includes(thirdPerspective) && p.includes("data")) ?? "data_human";
    const out = await this.fetcher.run(async () => {
      const main = await this.ctx.api.summary(pair, subset);
      const third = await this.ctx.api.summary(
        thirdPerspective === "human" ? "data_human" : thirdPair === pair ? "model_human" : thirdPair,
        subset,
      );
      return { main, third };
    });
    if (!out) return;
    this.lastSummary = out.main;
    this.render(out.main, out.third, thirdPerspective);
  }

  private render(summary: SummaryResponse, third: SummaryResponse, thirdName: string): void {
    clear(this.body);
    this.root.setAttribute("data-count", String(summary.subset_size));
    const nx = summary.x.bins;
    const ny = summary.y.bins;
    const width = nx * CELL + 50;
    const height = ny * CELL + 40;
    const peak = Math.max(1, ...summary.counts.flat());
    const plot = svg("svg", {
      viewBox: `0 0 ${width} ${height}`,
      width,
      height,
      "data-role": "heatmap",
    });
    const grid = svg("g", { transform: "translate(40, 8)" });
    for (let ix = 0; ix < nx; ix += 1) {
      for (let iy = 0; iy < ny; iy += 1) {
        const count = summary.counts[ix][iy];
        grid.append(
          svg("rect", {
            x: ix * CELL,
            y: (ny - 1 - iy) * CELL,
            width: CELL - 1,
            height: CELL - 1,
            fill: count === 0 ? "#f4f4f2" : heatColor(count / peak),
            "data-cell": `${ix},${iy}`,
            "data-count": count,
          }),
        );
      }
    }
    grid.append(
      svg("text", { x: (nx * CELL) / 2, y: ny * CELL + 16, class: "axis-label", text: summary.x.perspective }),
    );
    grid.append(
      svg("text", {
        x: -10,
        y: (ny * CELL) / 2,
        class: "axis-label",
        transform: `rotate(-90 -10 ${(ny * CELL) / 2})`,
        text: summary.y.perspective,
      }),
    );
    plot.append(grid);
    this.attachBrush(plot, grid, summary);
    this.body.append(plot);

    // the remaining perspective as a brushable 1-D histogram
    const axisCounts = thirdName === summary.x.perspective ? summary.x_marginal : third.y_marginal;
    const hist = el("div", { class: "third-hist" });
    hist.append(el("span", { class: "axis-label", text: thirdName }));
    const bar = svg("svg", { viewBox: `0 0 ${axisCounts.length * 14} 30`, width: axisCounts.length * 14, height: 30 });
    const histPeak = Math.max(1, ...axisCounts);
    axisCounts.forEach((count, index) => {
      bar.append(
        svg("rect", {
          x: index * 14,
          y: 30 - (count / histPeak) * 28,
          width: 12,
          height: (count / histPeak) * 28,
          fill: "#8a8a88",
          "data-bin": index,
          "data-count": count,
        }),
      );
    });
    bar.addEventListener("click", (event) => {
      const target = event.target as Element;
      const bin = target.getAttribute("data-bin");
      if (bin === null) return;
      const b = Number(bin);
      const interval = this.binInterval(thirdName, b, b, axisCounts.length);
      void this.applyBrush({ [thirdName]: interval } as BrushIntervals);
    });
    hist.append(bar);
    this.body.append(hist);
    this.body.append(
      el("div", { class: "caption", text: `${summary.subset_size} instances, ${summary.excluded} without human labels` }),
    );
  }

  private attachBrush(plot: SVGElement, grid: SVGElement, summary: SummaryResponse): void {
    const toCell = (event: MouseEvent): [number, number] => {
      const box = (plot as unknown as SVGGraphicsElement).getBoundingClientRect();
      const x = Math.floor((event.clientX - box.left - 40) / CELL);
      const y = summary.y.bins - 1 - Math.floor((event.clientY - box.top - 8) / CELL);
      return [
        Math.max(0, Math.min(summary.x.bins - 1, x)),
        Math.max(0, Math.min(summary.y.bins - 1, y)),
      ];
    };
    plot.addEventListener("mousedown", (event) => {
      const [x, y] = toCell(event as MouseEvent);
      this.drag = { x0: x, y0: y, x1: x, y1: y };
    });
    plot.addEventListener("mousemove", (event) => {
      if (!this.drag) return;
      [this.drag.x1, this.drag.y1] = toCell(event as MouseEvent);
    });
    plot.addEventListener("mouseup", () => {
      if (!this.drag || !this.lastSummary) return;
      const { x0, y0, x1, y1 } = this.drag;
      this.drag = null;
      const s = this.lastSummary;
      const intervals: BrushIntervals = {};
      intervals[s.x.perspective as keyof BrushIntervals] = this.binInterval(
        s.x.perspective, Math.min(x0, x1), Math.max(x0, x1), s.x.bins);
      intervals[s.y.perspective as keyof BrushIntervals] = this.binInterval(
        s.y.perspective, Math.min(y0, y1), Math.max(y0, y1), s.y.bins);
      void this.applyBrush(intervals);
    });
  }
}
