/** Parallel coordinates: the data-difficulty axis followed by one axis per
 * probe, horizontally aligned with the flow columns above. */

import { ViewFetcher } from "../api.js";
import { clear, el, svg } from "../dom.js";
import { columnX, FLOW, flowWidth } from "../layout.js";
import { subsetParam, type ViewContext } from "./common.js";

const HEIGHT = 130;
const MAX_POLYLINES = 400;

export class PcpView {
  readonly root: HTMLElement;
  private fetcher = new ViewFetcher();
  private body: HTMLElement;

  constructor(container: HTMLElement, private ctx: ViewContext) {
    this.root = el("section", { class: "panel wide", "data-view": "pcp" });
    this.root.append(el("header", {}, [el("h2", { text: "Per-layer difficulty (PCP)" })]));
    this.body = el("div", { class: "body" });
    this.root.append(this.body);
    container.append(this.root);
  }

  /** Data axis sits one flow-column slot left of the input probe column. */
  private axisX(axisIndex: number): number {
    if (axisIndex === 0) return FLOW.marginLeft - 55;
    return columnX(axisIndex - 1) + FLOW.nodeWidth / 2;
  }

  async refresh(): Promise<void> {
    const out = await this.fetcher.run(() => this.ctx.api.pcp(subsetParam(this.ctx.store)));
    if (!out) return;
    clear(this.body);
    this.root.setAttribute("data-count", String(out.ids.length));
    const width = flowWidth(out.axes.length - 1);
    const plot = svg("svg", {
      viewBox: `0 0 ${width} ${HEIGHT + 30}`,
      width,
      height: HEIGHT + 30,
      "data-role": "pcp",
    });
    out.axes.forEach((axis, index) => {
      const x = this.axisX(index);
      plot.append(svg("line", { x1: x, y1: 8, x2: x, y2: 8 + HEIGHT, stroke: "#bbb" }));
      plot.append(svg("text", { x, y: HEIGHT + 26, class: "axis-label", text: axis.replace("probe:", "") }));
    });
    const shown = out.ids.slice(0, MAX_POLYLINES);
    shown.forEach((id, row) => {
      const points = out.values[row]
        .map((value, axis) => `${this.axisX(axis)},${8 + (1 - value) * HEIGHT}`)
        .join(" ");
      plot.append(
        svg("polyline", {
          points,
          fill: "none",
          stroke: "#5b7fa6",
          "stroke-opacity": 0.35,
          "data-instance": id,
          "data-role": "polyline",
        }),
      );
    });
    this.body.append(plot);
    if (out.ids.length > shown.length) {
      this.body.append(
        el("div", { class: "caption", text: `showing ${shown.length} of ${out.ids.length} polylines` }),
      );
    }
  }
}
