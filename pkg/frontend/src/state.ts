/** Shared view state: every coordinated view renders the same active subset. */

import type { PairName } from "./api.js";

export interface BrushIntervals {
  data?: [number, number];
  model?: [number, number];
  human?: [number, number];
}

export interface ViewState {
  activeSubset: string; // "all" or a subset id
  activeSubsetSize: number | null; // server-reported size of the active subset
  pair: PairName;
  projectionSource: string;
  sortKey: string;
  sortOrder: "asc" | "desc";
  page: number;
  selectedFlowElements: string[];
  brush: BrushIntervals;
  hoverTarget: string | null;
  revision: number;
}

export const initialState: ViewState = {
  activeSubset: "all",
  activeSubsetSize: null,
  pair: "data_model",
  projectionSource: "pixel",
  sortKey: "instance_id",
  sortOrder: "asc",
  page: 0,
  selectedFlowElements: [],
  brush: {},
  hoverTarget: null,
  revision: 0,
};

export type Listener = (state: ViewState) => void;

export class Store {
  private state: ViewState;
  private listeners: Listener[] = [];

  constructor(state: ViewState = initialState) {
    this.state = { ...state };
  }

  get(): ViewState {
    return this.state;
  }

  update(partial: Partial<ViewState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }
}
