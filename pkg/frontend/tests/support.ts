import { readFileSync } from "node:fs";
import { join } from "node:path";

import { App } from "../src/app.js";

export interface ServerInfo {
  base: string;
  bundleDir: string;
}

export function serverInfo(): ServerInfo {
  return JSON.parse(readFileSync(join(import.meta.dirname, ".server.json"), "utf-8"));
}

export async function bootApp(): Promise<App> {
  document.body.innerHTML = '<div id="app"></div>';
  const app = new App(document.getElementById("app")!, serverInfo().base);
  await app.init();
  await app.whenIdle();
  return app;
}

/** data-count attribute of every coordinated view, keyed by view name. */
export function viewCounts(): Record<string, number> {
  const names = ["summary", "confusion", "projection", "flow", "pcp", "instances"];
  const out: Record<string, number> = {};
  for (const name of names) {
    const node = document.querySelector(`[data-view="${name}"]`);
    out[name] = Number(node?.getAttribute("data-count"));
  }
  return out;
}

export function expectation(bundleDir: string): {
  kinds: Record<string, string[]>;
  accuracy: number;
} {
  return JSON.parse(readFileSync(join(bundleDir, "expectations.json"), "utf-8"));
}
