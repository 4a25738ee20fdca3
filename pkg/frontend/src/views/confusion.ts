/** Clickable confusion matrix; a cell click activates that (actual, predicted) set. */

import { ViewFetcher } from "../api.js";
import { clear, el } from "../dom.js";
import { classColor, heatColor } from "../palette.js";
import { subsetParam, type ViewContext } from "./common.js";

export class ConfusionView {
  readonly root: HTMLElement;
  private fetcher = new ViewFetcher();
  private body: HTMLElement;

  constructor(container: HTMLElement, private ctx: ViewContext) {
    this.root = el("section", { class: "panel", "data-view": "confusion" });
    this.root.append(el("header", {}, [el("h2", { text: "Model performance" })]));
    this.body = el("div", { class: "body" });
    this.root.append(this.body);
    container.append(this.root);
  }

  async refresh(): Promise<void> {
    const out = await this.fetcher.run(() => this.ctx.api.confusion(subsetParam(this.ctx.store)));
    if (!out) return;
    clear(this.body);
    this.root.setAttribute("data-count", String(out.total));
    const C = out.class_names.length;
    const peak = Math.max(1, ...out.counts.flat());
    const table = el("table", { class: "confusion" });
    const head = el("tr", {}, [el("th", { text: "actual \\ predicted" })]);
    for (let p = 0; p < C; p += 1) {
      head.append(el("th", {}, [el("span", { class: "chip", style: `background:${classColor(p)}` }), out.class_names[p]]));
    }
    table.append(head);
    for (let a = 0; a < C; a += 1) {
      const row = el("tr", {}, [
        el("th", {}, [el("span", { class: "chip", style: `background:${classColor(a)}` }), out.class_names[a]]),
      ]);
      for (let p = 0; p < C; p += 1) {
        const count = out.counts[a][p];
        const cell = el("td", {
          text: String(count),
          "data-cell": `${a},${p}`,
          style: `background:${count === 0 ? "#f7f7f5" : heatColor(count / peak)}`,
          title: `actual ${out.class_names[a]}, predicted ${out.class_names[p]}: ${count}`,
        });
        cell.addEventListener("click", () => {
          void this.ctx.hooks.select(
            { kind: "confusion", cells: [[a, p]] },
            `${out.class_names[a]}→${out.class_names[p]}`,
          );
        });
        row.append(cell);
      }
      table.append(row);
    }
    this.body.append(table);
    const accuracy = out.total > 0 ? out.correct / out.total : 0;
    this.body.append(
      el("div", { class: "caption", text: `${out.total} instances, accuracy ${(accuracy * 100).toFixed(2)}%` }),
    );
  }
}
