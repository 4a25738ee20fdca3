/** Difficulty flow: one column of k-NN prediction nodes per probe, instances
 * absorbed into top/bottom compressed nodes once past their prediction depth.
 *
 * Node heights are proportional to instance counts (exact float heights, so
 * rendered pixels stay within 1px of proportionality); class identity is the
 * node's border/side-bar color, inner rectangles are filled by actual class.
 * Clicking any node, rectangle, or link activates exactly its instance set.
 */

import type { FlowColumn, FlowResponse } from "../api.js";
import { ViewFetcher } from "../api.js";
import { clear, el, svg } from "../dom.js";
import { classColor } from "../palette.js";
import { columnX, FLOW, flowWidth } from "../layout.js";
import { subsetParam, type ViewContext } from "./common.js";

interface NodeGeometry {
  y: number;
  height: number;
}

export class FlowView {
  readonly root: HTMLElement;
  private fetcher = new ViewFetcher();
  private body: HTMLElement;

  constructor(container: HTMLElement, private ctx: ViewContext) {
    this.root = el("section", { class: "panel wide", "data-view": "flow" });
    this.root.append(el("header", {}, [el("h2", { text: "Difficulty flow" })]));
    this.body = el("div", { class: "body" });
    this.root.append(this.body);
    container.append(this.root);
  }

  private select(elementId: string): void {
    const base = subsetParam(this.ctx.store);
    this.ctx.store.update({ selectedFlowElements: [elementId] });
    void this.ctx.hooks.select({ kind: "flow", element: elementId, base }, elementId);
  }

  async refresh(): Promise<void> {
    const out = await this.fetcher.run(() => this.ctx.api.flow(subsetParam(this.ctx.store)));
    if (!out) return;
    clear(this.body);
    this.root.setAttribute("data-count", String(out.n));
    const width = flowWidth(out.columns.length);
    const height = FLOW.height + 60;
    const plot = svg("svg", { viewBox: `0 0 ${width} ${height}`, width, height, "data-role": "flow" });

    const geometry = new Map<string, NodeGeometry>();
    out.columns.forEach((column) => {
      this.renderColumn(plot, out, column, geometry);
    });
    this.renderLinks(plot, out, geometry);
    this.body.append(plot);
  }

  /** One column: top compressed, class nodes by predicted index, bottom compressed. */
  private renderColumn(
    plot: SVGElement,
    out: FlowResponse,
    column: FlowColumn,
    geometry: Map<string, NodeGeometry>,
  ): void {
    const x = columnX(column.index);
    const parts: { id: string; count: number; kind: "top" | "bottom" | "class"; node?: FlowColumn["class_nodes"][0] }[] = [
      { id: column.top.id, count: column.top.count, kind: "top" },
      ...column.class_nodes.map((node) => ({ id: node.id, count: node.count, kind: "class" as const, node })),
      { id: column.bottom.id, count: column.bottom.count, kind: "bottom" },
    ];
    const visible = parts.filter((part) => part.count > 0);
    const gaps = Math.max(0, visible.length - 1) * FLOW.nodePad;
    const usable = FLOW.height - gaps;
    const scale = usable / out.n;

    const group = svg("g", { transform: `translate(${x}, 20)`, "data-column": column.index });
    let y = 0;
    for (const part of visible) {
      const nodeHeight = part.count * scale;
      geometry.set(part.id, { y: 20 + y + nodeHeight / 2, height: nodeHeight });
      if (part.kind === "class" && part.node) {
        // side bar carries the predicted class color; inner rects the actual classes
        const node = part.node;
        const container = svg("g", { "data-node": node.id });
        container.append(
          svg("rect", {
            x: -5,
            y,
            width: 4,
            height: nodeHeight,
            fill: classColor(node.predicted),
            "data-role": "side-bar",
          }),
        );
        let innerY = y;
        for (const rect of node.rects) {
          const rectHeight = (rect.count / part.count) * nodeHeight;
          const inner = svg("rect", {
            x: 0,
            y: innerY,
            width: FLOW.nodeWidth,
            height: rectHeight,
            fill: classColor(rect.actual),
            stroke: classColor(node.predicted),
            "stroke-width": 1,
            "data-element": rect.id,
            "data-count": rect.count,
            class: "clickable",
          });
          inner.append(svg("title", { text: `${rect.id}: ${rect.count}` }));
          inner.addEventListener("click", () => this.select(rect.id));
          container.append(inner);
          geometry.set(rect.id, { y: 20 + innerY + rectHeight / 2, height: rectHeight });
          innerY += rectHeight;
        }
        group.append(container);
      } else {
        const compressed = part.kind === "top" ? column.top : column.bottom;
        const fill = part.kind === "top" ? "#d7e3d0" : "#e7c9c9";
        const box = svg("rect", {
          x: 0,
          y,
          width: FLOW.nodeWidth,
          height: nodeHeight,
          fill,
          stroke: "#777",
          "data-element": compressed.id,
          "data-count": compressed.count,
          class: "clickable",
        });
        box.append(svg("title", { text: `${compressed.id}: ${compressed.count}` }));
        box.addEventListener("click", () => this.select(compressed.id));
        group.append(box);
        // class distribution bars inside the compressed node
        const peak = Math.max(1, ...compressed.class_counts);
        compressed.class_counts.forEach((count, classIndex) => {
          if (count === 0) return;
          const barWidth = (count / peak) * (FLOW.nodeWidth - 6);
          group.append(
            svg("rect", {
              x: 3,
              y: y + 2 + classIndex * Math.max(2, (nodeHeight - 4) / out.n_classes),
              width: barWidth,
              height: Math.max(1.5, (nodeHeight - 4) / out.n_classes - 1),
              fill: classColor(classIndex),
              "data-role": "compressed-bar",
              "pointer-events": "none",
            }),
          );
        });
      }
      y += nodeHeight + FLOW.nodePad;
    }
    group.append(
      svg("text", { x: FLOW.nodeWidth / 2, y: FLOW.height + 28, class: "axis-label", text: column.probe }),
    );
    plot.append(group);
  }

  private renderLinks(plot: SVGElement, out: FlowResponse, geometry: Map<string, NodeGeometry>): void {
    for (const link of out.links) {
      const source = geometry.get(link.source);
      const target = geometry.get(link.target);
      if (!source || !target) continue;
      const x0 = columnX(link.column) + FLOW.nodeWidth;
      const x1 = columnX(link.column + 1) - 5;
      const mid = (x0 + x1) / 2;
      const path = svg("path", {
        d: `M ${x0} ${source.y} C ${mid} ${source.y} ${mid} ${target.y} ${x1} ${target.y}`,
        fill: "none",
        stroke: "#9a9a98",
        "stroke-opacity": 0.45,
        "stroke-width": Math.max(1, (link.count / out.n) * FLOW.height * 0.9),
        "data-element": link.id,
        "data-count": link.count,
        class: "clickable",
      });
      path.append(svg("title", { text: `${link.id}: ${link.count}` }));
      path.addEventListener("click", () => this.select(link.id));
      plot.append(path);
    }
  }
}
