/** Fixed categorical palette, assigned by class index identically in all views. */

export const CLASS_COLORS = [
  "#4e79a7",
  "#f28e2b",
  "#59a14f",
  "#e15759",
  "#b07aa1",
  "#edc948",
  "#76b7b2",
  "#ff9da7",
  "#9c755f",
  "#bab0ac",
  "#86bcb6",
  "#d37295",
];

export function classColor(classIndex: number): string {
  return CLASS_COLORS[classIndex % CLASS_COLORS.length];
}

/** Single-hue ramp for heatmap cells; t in [0, 1]. */
export function heatColor(t: number): string {
  const clamped = Math.max(0, Math.min(1, t));
  const light = 97 - clamped * 60;
  return `hsl(24, 85%, ${light}%)`;
}
