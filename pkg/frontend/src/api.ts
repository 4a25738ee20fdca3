/** Typed client for the difficulty-analysis API.
 *
 * The client never recomputes difficulty values: every number rendered by the
 * views comes verbatim from these response bodies.
 */

export type PairName = "data_model" | "data_human" | "model_human";
export type SetOp = "union" | "intersection" | "difference";

export interface StatusResponse {
  state: "ready" | "not_computed";
  revision: number;
  dataset_name: string;
  class_names: string[];
  layers: string[];
  probes: string[];
  n_train: number;
  n_test: number;
  has_annotations: boolean;
  n_profiled?: number;
  accuracy?: number;
  mean_data_kdn?: number;
  mean_model_difficulty?: number;
  mean_human_difficulty?: number | null;
  config?: { k: number; threshold_mode: string };
  thresholds?: { data: number; model: number; human: number | null };
}

export interface SummaryResponse {
  revision: number;
  pair: PairName;
  x: { perspective: string; bins: number };
  y: { perspective: string; bins: number };
  counts: number[][];
  x_marginal: number[];
  y_marginal: number[];
  total: number;
  excluded: number;
  subset_size: number;
}

export interface ConfusionResponse {
  revision: number;
  class_names: string[];
  counts: number[][];
  total: number;
  correct: number;
}

export interface FlowRect {
  id: string;
  predicted: number;
  actual: number;
  count: number;
  ids: string[];
}

export interface FlowClassNode {
  id: string;
  predicted: number;
  count: number;
  rects: FlowRect[];
}

export interface FlowCompressed {
  id: string;
  count: number;
  class_counts: number[];
  ids: string[];
}

export interface FlowColumn {
  index: number;
  probe: string;
  class_nodes: FlowClassNode[];
  top: FlowCompressed;
  bottom: FlowCompressed;
}

export interface FlowLink {
  id: string;
  column: number;
  source: string;
  target: string;
  count: number;
  ids: string[];
}

export interface FlowResponse {
  revision: number;
  n: number;
  n_classes: number;
  columns: FlowColumn[];
  links: FlowLink[];
}

export interface PcpResponse {
  revision: number;
  axes: string[];
  ids: string[];
  values: number[][];
}

export interface ProjectionResponse {
  revision: number;
  source: string;
  ids: string[];
  coords: [number, number][];
  explained_variance: number[];
}

export interface PatternsResponse {
  revision: number;
  counts: Record<string, number>;
  total: number;
}

export interface InstanceRow {
  instance_id: string;
  actual: number;
  predicted: number;
  correct: boolean;
  data_kdn: number;
  layer_kdn: number[];
  pd: number;
  model_difficulty: number;
  human_difficulty: number | null;
  pattern: string;
  never_aligned: boolean;
  trace: number[];
  image: string | null;
}

export interface InstancesResponse {
  revision: number;
  total: number;
  page: number;
  page_size: number;
  sort_key: string;
  order: "asc" | "desc";
  rows: InstanceRow[];
}

export interface NeighborEntry {
  row: number;
  instance_id: string;
  label: number;
  distance: number;
  image: string | null;
}

export interface NeighborsResponse {
  revision: number;
  instance_id: string;
  layer: string;
  k: number;
  center_score: number;
  probe_prediction: number;
  class_counts: number[];
  neighbors: NeighborEntry[];
  histogram: { bins: number; max_distance: number; counts: number[][] };
}

export interface SubsetInfo {
  id: string;
  name: string;
  size: number;
  provenance: Record<string, unknown>;
  created_at: string;
}

export interface SubsetsResponse {
  revision: number;
  subsets: SubsetInfo[];
}

export interface SubsetMutationResponse {
  revision: number;
  subset?: { id: string; name: string; size: number; members: string[] };
  saved?: boolean;
  store_revision?: number;
}

export type Descriptor =
  | { kind: "brush"; data?: [number, number]; model?: [number, number]; human?: [number, number] }
  | { kind: "heatmap"; pair: PairName; bins: number; cells: [number, number][] }
  | { kind: "confusion"; cells: [number, number][] }
  | { kind: "projection"; source: string; rect?: [number, number, number, number]; polygon?: [number, number][] }
  | { kind: "flow"; element: string; base?: string }
  | { kind: "pattern"; codes: string[] }
  | { kind: "ids"; members: string[] };

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}

async function unwrap<T>(response: Response): Promise<T> {
  const body = await response.json();
  if (!response.ok) {
    throw new ApiError(response.status, body.code ?? "unknown", body.message ?? "request failed");
  }
  return body as T;
}

export class ApiClient {
  constructor(private base: string) {}

  private url(path: string, params: Record<string, string | number | undefined> = {}): string {
    const query = Object.entries(params)
      .filter(([, value]) => value !== undefined)
      .map(([key, value]) => `${encodeURIComponent(key)}=${encodeURIComponent(String(value))}`)
      .join("&");
    return `${this.base}${path}${query ? `?${query}` : ""}`;
  }

  private async get<T>(path: string, params: Record<string, string | number | undefined> = {}): Promise<T> {
    return unwrap<T>(await fetch(this.url(path, params)));
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    return unwrap<T>(
      await fetch(this.url(path), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
  }

  status(): Promise<StatusResponse> {
    return this.get("/api/status");
  }

  summary(pair: PairName, subset?: string): Promise<SummaryResponse> {
    return this.get("/api/summary", { pair, subset });
  }

  confusion(subset?: string): Promise<ConfusionResponse> {
    return this.get("/api/confusion", { subset });
  }

  flow(subset?: string): Promise<FlowResponse> {
    return this.get("/api/flow", { subset });
  }

  pcp(subset?: string): Promise<PcpResponse> {
    return this.get("/api/pcp", { subset });
  }

  projection(source: string, subset?: string): Promise<ProjectionResponse> {
    return this.get("/api/projection", { source, subset });
  }

  patterns(subset?: string): Promise<PatternsResponse> {
    return this.get("/api/patterns", { subset });
  }

  instances(options: {
    subset?: string;
    sort_key?: string;
    order?: "asc" | "desc";
    page?: number;
    page_size?: number;
  }): Promise<InstancesResponse> {
    return this.get("/api/instances", options);
  }

  neighbors(instanceId: string, layer: string, k?: number, subset?: string): Promise<NeighborsResponse> {
    return this.get("/api/neighbors", { instance_id: instanceId, layer, k, subset });
  }

  subsets(): Promise<SubsetsResponse> {
    return this.get("/api/subsets");
  }

  createSubset(descriptor: Descriptor, name?: string): Promise<SubsetMutationResponse> {
    return this.post("/api/subsets", { op: "create", descriptor, name });
  }

  combineSubsets(a: string, b: string, setOp: SetOp, name?: string): Promise<SubsetMutationResponse> {
    return this.post("/api/subsets", { op: "combine", a, b, set_op: setOp, name });
  }

  saveSubsets(): Promise<SubsetMutationResponse> {
    return this.post("/api/subsets", { op: "save" });
  }

  compute(overrides: Record<string, unknown>): Promise<{ revision: number; computed: boolean }> {
    return this.post("/api/compute", overrides);
  }

  imageUrl(instanceId: string): string {
    return this.url("/api/image", { instance_id: instanceId });
  }
}

/** Serializes view refreshes: at most one in-flight request chain per view,
 * and responses issued before a newer refresh are dropped. */
export class ViewFetcher {
  private seq = 0;

  async run<T>(work: () => Promise<T>): Promise<T | null> {
    const ticket = ++this.seq;
    const result = await work();
    return ticket === this.seq ? result : null;
  }
}
