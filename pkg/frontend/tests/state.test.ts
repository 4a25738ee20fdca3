import { describe, expect, it } from "vitest";

import { ViewFetcher } from "../src/api.js";
import { CLASS_COLORS, classColor } from "../src/palette.js";
import { Store, initialState } from "../src/state.js";
import { ProjectionView } from "../src/views/projection.js";

describe("store", () => {
  it("notifies subscribers and merges partial updates", () => {
    const store = new Store();
    const seen: string[] = [];
    const unsubscribe = store.subscribe((state) => seen.push(state.activeSubset));
    store.update({ activeSubset: "s1" });
    store.update({ pair: "model_human" });
    expect(seen).toEqual(["s1", "s1"]);
    expect(store.get().activeSubset).toBe("s1");
    expect(store.get().pair).toBe("model_human");
    unsubscribe();
    store.update({ activeSubset: "s2" });
    expect(seen).toHaveLength(2);
  });

  it("starts on the full profiled set", () => {
    expect(initialState.activeSubset).toBe("all");
  });
});

describe("view fetcher", () => {
  it("drops responses that were overtaken by a newer refresh", async () => {
    const fetcher = new ViewFetcher();
    let releaseSlow: (value: string) => void = () => {};
    const slow = fetcher.run(() => new Promise<string>((resolve) => (releaseSlow = resolve)));
    const fast = await fetcher.run(async () => "fresh");
    expect(fast).toBe("fresh");
    releaseSlow("stale");
    expect(await slow).toBeNull();
  });
});

describe("palette", () => {
  it("assigns colors by class index and cycles", () => {
    expect(classColor(0)).toBe(CLASS_COLORS[0]);
    expect(classColor(3)).toBe(CLASS_COLORS[3]);
    expect(classColor(CLASS_COLORS.length)).toBe(CLASS_COLORS[0]);
  });
});

describe("lasso preview", () => {
  it("point-in-polygon matches a simple square", () => {
    const square: [number, number][] = [
      [0, 0],
      [4, 0],
      [4, 4],
      [0, 4],
    ];
    expect(ProjectionView.pointInPolygon([2, 2], square)).toBe(true);
    expect(ProjectionView.pointInPolygon([5, 2], square)).toBe(false);
    expect(ProjectionView.pointInPolygon([-1, -1], square)).toBe(false);
  });
});
