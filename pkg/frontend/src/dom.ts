/** Tiny DOM/SVG construction helpers (no framework). */

const SVG_NS = "http://www.w3.org/2000/svg";

export type Attrs = Record<string, string | number | boolean | null | undefined>;

function assign(node: Element, attrs: Attrs): void {
  for (const [key, value] of Object.entries(attrs)) {
    if (value === undefined || value === null || value === false) continue;
    if (key === "text") {
      node.textContent = String(value);
    } else {
      node.setAttribute(key, String(value === true ? "" : value));
    }
  }
}

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Attrs = {},
  children: (Element | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  assign(node, attrs);
  for (const child of children) {
    node.append(child instanceof Element ? child : document.createTextNode(child));
  }
  return node;
}

export function svg(tag: string, attrs: Attrs = {}, children: Element[] = []): SVGElement {
  const node = document.createElementNS(SVG_NS, tag) as SVGElement;
  assign(node, attrs);
  for (const child of children) {
    node.append(child);
  }
  return node;
}

export function clear(node: Element): void {
  while (node.firstChild) {
    node.removeChild(node.firstChild);
  }
}

export function fmt(value: number | null | undefined, digits = 2): string {
  if (value === null || value === undefined || Number.isNaN(value)) return "–";
  return value.toFixed(digits);
}

/** Donut chart segments for a per-class count histogram; one path per class. */
export function donut(
  counts: number[],
  radius: number,
  hole: number,
  color: (i: number) => string,
): SVGElement[] {
  const total = counts.reduce((a, b) => a + b, 0);
  const segments: SVGElement[] = [];
  if (total === 0) return segments;
  const ring = (r: number, sweepFlag: number) =>
    `M ${r} 0 A ${r} ${r} 0 1 ${sweepFlag} ${-r} 0 A ${r} ${r} 0 1 ${sweepFlag} ${r} 0`;
  let angle = -Math.PI / 2;
  counts.forEach((count, index) => {
    if (count === 0) return;
    const sweep = (count / total) * 2 * Math.PI;
    let d: string;
    if (sweep > Math.PI * 1.999) {
      // full annulus: outer circle plus reversed inner circle, even-odd filled
      d = `${ring(radius, 1)} ${ring(hole, 0)} Z`;
    } else {
      const a0 = angle;
      const a1 = angle + sweep;
      const large = sweep > Math.PI ? 1 : 0;
      const p0 = [Math.cos(a0), Math.sin(a0)];
      const p1 = [Math.cos(a1), Math.sin(a1)];
      d = [
        `M ${p0[0] * radius} ${p0[1] * radius}`,
        `A ${radius} ${radius} 0 ${large} 1 ${p1[0] * radius} ${p1[1] * radius}`,
        `L ${p1[0] * hole} ${p1[1] * hole}`,
        `A ${hole} ${hole} 0 ${large} 0 ${p0[0] * hole} ${p0[1] * hole}`,
        "Z",
      ].join(" ");
    }
    segments.push(
      svg("path", {
        d,
        fill: color(index),
        "fill-rule": "evenodd",
        "data-class": index,
        "data-count": count,
      }),
    );
    angle += sweep;
  });
  return segments;
}
