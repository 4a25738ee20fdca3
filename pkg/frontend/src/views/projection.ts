/** Projection scatter over the three feature sources with rectangle and lasso
 * brushes. The lasso's point-in-polygon test runs client-side only as a live
 * preview; membership is decided server-side from the submitted polygon. */

import type { ProjectionResponse } from "../api.js";
import { ViewFetcher } from "../api.js";
import { clear, el, svg } from "../dom.js";
import { classColor } from "../palette.js";
import { subsetParam, type ViewContext } from "./common.js";

const SIZE = 320;
const PAD = 16;

export class ProjectionView {
  readonly root: HTMLElement;
  private fetcher = new ViewFetcher();
  private body: HTMLElement;
  private sourceSelect: HTMLSelectElement;
  private modeSelect: HTMLSelectElement;
  private full: ProjectionResponse | null = null;
  private classOf: Map<string, number> = new Map();
  private scale: { x0: number; x1: number; y0: number; y1: number } | null = null;
  private dragPoints: [number, number][] | null = null;

  constructor(container: HTMLElement, private ctx: ViewContext) {
    this.root = el("section", { class: "panel", "data-view": "projection" });
    this.sourceSelect = el("select", { "data-role": "source" });
    this.modeSelect = el("select", { "data-role": "brush-mode" }, [
      el("option", { value: "rect", text: "rect brush" }),
      el("option", { value: "lasso", text: "lasso" }),
    ]);
    this.sourceSelect.addEventListener("change", () => {
      this.ctx.store.update({ projectionSource: this.sourceSelect.value });
      void this.ctx.hooks.refresh();
    });
    this.root.append(
      el("header", {}, [el("h2", { text: "Projection" }), this.sourceSelect, this.modeSelect]),
    );
    this.body = el("div", { class: "body" });
    this.root.append(this.body);
    container.append(this.root);
  }

  setSources(layers: string[]): void {
    clear(this.sourceSelect);
    const options = ["pixel", ...layers.map((layer) => `layer:${layer}`), "pattern"];
    for (const source of options) {
      this.sourceSelect.append(el("option", { value: source, text: source }));
    }
    this.sourceSelect.value = this.ctx.store.get().projectionSource;
  }

  /** Class labels come from the instance table so points can use class colors. */
  setClasses(classOf: Map<string, number>): void {
    this.classOf = classOf;
  }

  private toData(px: number, py: number): [number, number] {
    const s = this.scale!;
    const x = s.x0 + ((px - PAD) / (SIZE - 2 * PAD)) * (s.x1 - s.x0);
    const y = s.y1 - ((py - PAD) / (SIZE - 2 * PAD)) * (s.y1 - s.y0);
    return [x, y];
  }

  private toPx(x: number, y: number): [number, number] {
    const s = this.scale!;
    const px = PAD + ((x - s.x0) / (s.x1 - s.x0 || 1)) * (SIZE - 2 * PAD);
    const py = PAD + ((s.y1 - y) / (s.y1 - s.y0 || 1)) * (SIZE - 2 * PAD);
    return [px, py];
  }

  async applyRect(rect: [number, number, number, number], name?: string): Promise<void> {
    await this.ctx.hooks.select(
      { kind: "projection", source: this.ctx.store.get().projectionSource, rect },
      name ?? "projection rect",
    );
  }

  async applyLasso(polygon: [number, number][], name?: string): Promise<void> {
    await this.ctx.hooks.select(
      { kind: "projection", source: this.ctx.store.get().projectionSource, polygon },
      name ?? "lasso",
    );
  }

  /** Preview-only membership test; the server is authoritative. */
  static pointInPolygon(point: [number, number], polygon: [number, number][]): boolean {
    let inside = false;
    for (let i = 0, j = polygon.length - 1; i < polygon.length; j = i, i += 1) {
      const [xi, yi] = polygon[i];
      const [xj, yj] = polygon[j];
      const crosses =
        yi > point[1] !== yj > point[1] &&
        point[0] < ((xj - xi) * (point[1] - yi)) / (yj - yi + 1e-300) + xi;
      if (crosses) inside = !inside;
    }
    return inside;
  }

  async refresh(): Promise<void> {
    const source = this.ctx.store.get().projectionSource;
    const subset = subsetParam(this.ctx.store);
    const out = await this.fetcher.run(async () => {
      const full = await this.ctx.api.projection(source);
      const active = subset ? await this.ctx.api.projection(source, subset) : full;
      return { full, active };
    });
    if (!out) return;
    this.full = out.full;
    const activeIds = new Set(out.active.ids);
    clear(this.body);
    this.root.setAttribute("data-count", String(out.active.ids.length));

    const xs = out.full.coords.map((c) => c[0]);
    const ys = out.full.coords.map((c) => c[1]);
    this.scale = {
      x0: Math.min(...xs),
      x1: Math.max(...xs),
      y0: Math.min(...ys),
      y1: Math.max(...ys),
    };
    if (this.scale.x1 === this.scale.x0) this.scale.x1 += 1;
    if (this.scale.y1 === this.scale.y0) this.scale.y1 += 1;

    const plot = svg("svg", { viewBox: `0 0 ${SIZE} ${SIZE}`, width: SIZE, height: SIZE, "data-role": "scatter" });
    out.full.ids.forEach((id, index) => {
      const [px, py] = this.toPx(out.full.coords[index][0], out.full.coords[index][1]);
      const classIndex = this.classOf.get(id);
      const active = activeIds.has(id);
      plot.append(
        svg("circle", {
          cx: px,
          cy: py,
          r: active ? 3 : 2,
          fill: classIndex === undefined ? "#777" : classColor(classIndex),
          "fill-opacity": active ? 0.9 : 0.15,
          "data-instance": id,
          "data-active": active ? "1" : "0",
        }),
      );
    });
    this.attachBrush(plot);
    this.body.append(plot);
    this.body.append(el("div", { class: "caption", text: `${out.active.ids.length} of ${out.full.ids.length} highlighted` }));
  }

  private attachBrush(plot: SVGElement): void {
    const toPoint = (event: MouseEvent): [number, number] => {
      const box = (plot as unknown as SVGGraphicsElement).getBoundingClientRect();
      return this.toData(event.clientX - box.left, event.clientY - box.top);
    };
    plot.addEventListener("mousedown", (event) => {
      this.dragPoints = [toPoint(event as MouseEvent)];
    });
    plot.addEventListener("mousemove", (event) => {
      if (this.dragPoints) this.dragPoints.push(toPoint(event as MouseEvent));
    });
    plot.addEventListener("mouseup", () => {
      if (!this.dragPoints || this.dragPoints.length < 2) {
        this.dragPoints = null;
        return;
      }
      const points = this.dragPoints;
      this.dragPoints = null;
      if (this.modeSelect.value === "lasso" && points.length >= 3) {
        void this.applyLasso(points);
      } else {
        const first = points[0];
        const last = points[points.length - 1];
        void this.applyRect([first[0], first[1], last[0], last[1]]);
      }
    });
  }
}
