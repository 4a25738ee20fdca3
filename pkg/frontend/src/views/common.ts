import type { ApiClient, Descriptor } from "../api.js";
import type { Store } from "../state.js";

/** How views hand selections back to the app: the server answers with the
 * subset that becomes active everywhere. `track` registers any other async
 * view work so the app can await quiescence. */
export interface SelectHooks {
  select(descriptor: Descriptor, name?: string): Promise<void>;
  activate(subsetId: string): Promise<void>;
  refresh(): Promise<void>;
  track<T>(work: Promise<T>): Promise<T>;
}

export interface ViewContext {
  api: ApiClient;
  store: Store;
  hooks: SelectHooks;
}

export function subsetParam(store: Store): string | undefined {
  const active = store.get().activeSubset;
  return active === "all" ? undefined : active;
}
