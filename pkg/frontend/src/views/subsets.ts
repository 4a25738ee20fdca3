/** Subset panel: list, activate, rename-on-create, combine with set algebra, save. */

import type { SetOp } from "../api.js";
import { ViewFetcher } from "../api.js";
import { clear, el } from "../dom.js";
import type { ViewContext } from "./common.js";

export class SubsetPanel {
  readonly root: HTMLElement;
  private fetcher = new ViewFetcher();
  private body: HTMLElement;
  private selectA: HTMLSelectElement;
  private selectB: HTMLSelectElement;
  private opSelect: HTMLSelectElement;
  private nameInput: HTMLInputElement;
  private message: HTMLElement;

  constructor(container: HTMLElement, private ctx: ViewContext) {
    this.root = el("section", { class: "panel", "data-view": "subsets" });
    this.root.append(el("header", {}, [el("h2", { text: "Subsets" })]));
    this.body = el("div", { class: "body", "data-role": "subset-list" });
    this.root.append(this.body);

    this.selectA = el("select", { "data-role": "combine-a" });
    this.selectB = el("select", { "data-role": "combine-b" });
    this.opSelect = el("select", { "data-role": "combine-op" }, [
      el("option", { value: "union", text: "∪ union" }),
      el("option", { value: "intersection", text: "∩ intersection" }),
      el("option", { value: "difference", text: "∖ difference" }),
    ]);
    this.nameInput = el("input", { placeholder: "name", "data-role": "combine-name" });
    const combineButton = el("button", { text: "combine", "data-role": "combine" });
    combineButton.addEventListener("click", () => void this.ctx.hooks.track(this.combine()));
    const saveButton = el("button", { text: "save", "data-role": "save" });
    saveButton.addEventListener("click", () => void this.ctx.hooks.track(this.save()));
    this.message = el("span", { class: "caption", "data-role": "message" });
    this.root.append(
      el("footer", {}, [this.selectA, this.opSelect, this.selectB, this.nameInput, combineButton, saveButton, this.message]),
    );
    container.append(this.root);
  }

  private async combine(): Promise<void> {
    const a = this.selectA.value;
    const b = this.selectB.value;
    if (!a || !b) return;
    const out = await this.ctx.api.combineSubsets(
      a,
      b,
      this.opSelect.value as SetOp,
      this.nameInput.value || undefined,
    );
    if (out.subset) {
      await this.ctx.hooks.activate(out.subset.id);
    }
  }

  private async save(): Promise<void> {
    const out = await this.ctx.api.saveSubsets();
    this.message.textContent = `saved (store revision ${out.store_revision})`;
    await this.refresh();
  }

  async refresh(): Promise<void> {
    const out = await this.fetcher.run(() => this.ctx.api.subsets());
    if (!out) return;
    clear(this.body);
    const active = this.ctx.store.get().activeSubset;
    const activeSize = this.ctx.store.get().activeSubsetSize;
    this.root.setAttribute("data-count", String(activeSize ?? ""));

    const makeRow = (id: string, name: string, size: number | null) => {
      const row = el("div", { class: `subset-row${id === active ? " active" : ""}`, "data-subset": id });
      const activate = el("button", { text: "◉", title: `activate ${name}`, "data-role": "activate" });
      activate.addEventListener("click", () => void this.ctx.hooks.activate(id));
      row.append(activate, el("span", { class: "mono", text: name }));
      if (size !== null) row.append(el("span", { class: "caption", text: ` (${size})` }));
      return row;
    };
    this.body.append(makeRow("all", "all profiled", null));
    for (const subset of out.subsets) {
      this.body.append(makeRow(subset.id, `${subset.id} · ${subset.name}`, subset.size));
    }

    for (const select of [this.selectA, this.selectB]) {
      const previous = select.value;
      clear(select);
      for (const subset of out.subsets) {
        select.append(el("option", { value: subset.id, text: `${subset.id} ${subset.name}` }));
      }
      if (previous) select.value = previous;
    }
  }
}
