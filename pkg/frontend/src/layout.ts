/** Shared geometry so the PCP axes align with the flow columns. */

export const FLOW = {
  marginLeft: 70, // room for the data axis of the PCP on the left
  columnGap: 150,
  nodeWidth: 26,
  height: 320,
  nodePad: 4, // vertical gap between nodes in a column
};

export function columnX(index: number): number {
  return FLOW.marginLeft + index * FLOW.columnGap;
}

export function flowWidth(nProbes: number): number {
  return columnX(nProbes - 1) + FLOW.nodeWidth + 40;
}
