/** View-level semantics: consistent class colors everywhere, server numbers
 * rendered verbatim, lasso membership finalized server-side. */

import { beforeAll, describe, expect, it } from "vitest";

import type { App } from "../src/app.js";
import { classColor } from "../src/palette.js";
import { bootApp, serverInfo } from "./support.js";

let app: App;

beforeAll(async () => {
  app = await bootApp();
});

describe("class colors", () => {
  it("uses the same palette in legend, confusion, scatter and flow", async () => {
    await app.activate("all");
    await app.whenIdle();
    const legendChip = document.querySelector('[data-role="status"] .chip') as HTMLElement;
    expect(legendChip.getAttribute("style")).toContain(classColor(0));

    const confusionChip = document.querySelector("table.confusion th .chip") as HTMLElement;
    expect(confusionChip.getAttribute("style")).toContain(classColor(0));

    const instances = await fetch(
      `${serverInfo().base}/api/instances?page_size=500`,
    ).then((r) => r.json());
    const byClass = new Map(instances.rows.map((row: { instance_id: string; actual: number }) => [
      row.instance_id, row.actual]));
    const circle = document.querySelector('[data-role="scatter"] circle[data-instance]')!;
    const id = circle.getAttribute("data-instance")!;
    expect(circle.getAttribute("fill")).toBe(classColor(byClass.get(id) as number));

    const sideBar = document.querySelector('[data-role="side-bar"]');
    expect(sideBar).toBeTruthy(); // class nodes carry their predicted-class color bar
  });
});

describe("no client-side recomputation", () => {
  it("instance rows render server values verbatim", async () => {
    await app.activate("all");
    await app.whenIdle();
    const server = await fetch(
      `${serverInfo().base}/api/instances?sort_key=instance_id&page=0&page_size=8`,
    ).then((r) => r.json());
    for (const row of server.rows) {
      const tr = document.querySelector(`tr[data-instance="${row.instance_id}"]`)!;
      const scores = tr.querySelector('[data-role="scores"]')!.textContent!;
      expect(scores).toContain(`data ${row.data_kdn.toFixed(2)}`);
      expect(scores).toContain(`model ${row.model_difficulty.toFixed(2)}`);
      const pattern = tr.textContent!;
      expect(pattern).toContain(`pattern ${row.pattern}`);
    }
  });
});

describe("projection selections", () => {
  it("rect selection matches the server's membership for the same rectangle", async () => {
    await app.activate("all");
    await app.whenIdle();
    const full = await fetch(`${serverInfo().base}/api/projection?source=pixel`).then((r) => r.json());
    const xs = full.coords.map((c: number[]) => c[0]);
    const ys = full.coords.map((c: number[]) => c[1]);
    const rect: [number, number, number, number] = [
      Math.min(...xs),
      Math.min(...ys),
      (Math.min(...xs) + Math.max(...xs)) / 2,
      (Math.min(...ys) + Math.max(...ys)) / 2,
    ];
    await app.projection.applyRect(rect);
    await app.whenIdle();
    const expected = full.ids.filter(
      (_: string, i: number) =>
        xs[i] >= rect[0] && xs[i] <= rect[2] && ys[i] >= rect[1] && ys[i] <= rect[3],
    ).length;
    expect(app.store.get().activeSubsetSize).toBe(expected);
  });

  it("lasso polygons are resolved by the server", async () => {
    await app.activate("all");
    await app.whenIdle();
    const full = await fetch(`${serverInfo().base}/api/projection?source=pixel`).then((r) => r.json());
    const xs = full.coords.map((c: number[]) => c[0]);
    const ys = full.coords.map((c: number[]) => c[1]);
    const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
    const [y0, y1] = [Math.min(...ys), Math.max(...ys)];
    const polygon: [number, number][] = [
      [x0, y0],
      [x1, y0],
      [x0 + (x1 - x0) / 3, y1],
    ];
    await app.projection.applyLasso(polygon);
    await app.whenIdle();
    const size = app.store.get().activeSubsetSize!;
    expect(size).toBeGreaterThan(0);
    expect(size).toBeLessThan(full.ids.length);
    // the active scatter highlight reflects the server-resolved membership
    const highlighted = document.querySelectorAll('[data-role="scatter"] circle[data-active="1"]');
    expect(highlighted.length).toBe(size);
  });
});

describe("summary histogram", () => {
  it("third-perspective histogram bins are brushable", async () => {
    await app.activate("all");
    await app.whenIdle();
    const bar = document.querySelector('.third-hist rect[data-bin="0"]')!;
    bar.dispatchEvent(new MouseEvent("click", { bubbles: true }));
    await app.whenIdle();
    expect(app.store.get().activeSubsetSize).toBeGreaterThan(0);
    app.summary.clearBrush();
    await app.activate("all");
    await app.whenIdle();
  });
});
