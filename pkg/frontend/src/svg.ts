/**
 * Minimal deterministic SVG composition: linear scales, axes, a symmetric
 * diverging colormap, and a document builder. No DOM, no randomness; the
 * same inputs always produce the same bytes.
 */

export interface Scale {
  (v: number): number;
  domain: [number, number];
  range: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  const fn = ((v: number) => r0 + ((v - d0) / span) * (r1 - r0)) as Scale;
  fn.domain = domain;
  fn.range = range;
  return fn;
}

export function ticks(lo: number, hi: number, count = 6): number[] {
  const span = hi - lo || 1;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const err = (span / count) / step;
  const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = step * mult;
  const start = Math.ceil(lo / s) * s;
  const out: number[] = [];
  for (let v = start; v <= hi + 1e-12 * span; v += s) {
    out.push(Math.abs(v) < 1e-12 * span ? 0 : v);
  }
  return out;
}

export function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1000 || a < 0.001) return v.toExponential(1);
  return String(Math.round(v * 1e6) / 1e6);
}

/**
 * Symmetric blue-white-red diverging map on [-1, 1]; back-flow (negative
 * current) must be as visible as forward flow.
 */
export function divergingColor(v: number): string {
  const x = Math.max(-1, Math.min(1, v));
  const t = Math.abs(x);
  // white -> saturated endpoint, linear in each channel
  const toward = x >= 0 ? [178, 24, 43] : [33, 102, 172];
  const ch = toward.map((c) => Math.round(255 + (c - 255) * t));
  return `rgb(${ch[0]},${ch[1]},${ch[2]})`;
}

export const SERIES_COLORS = ["#1b6ca8", "#c23b22", "#3a923a", "#7b52ab", "#b8860b"];

export class Svg {
  private parts: string[] = [];

  constructor(
    readonly width: number,
    readonly height: number,
  ) {}

  raw(s: string): void {
    this.parts.push(s);
  }

  rect(x: number, y: number, w: number, h: number, fill: string): void {
    this.raw(
      `<rect x="${r2(x)}" y="${r2(y)}" width="${r2(w)}" height="${r2(h)}" fill="${fill}"/>`,
    );
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, opts = ""): void {
    this.raw(
      `<line x1="${r2(x1)}" y1="${r2(y1)}" x2="${r2(x2)}" y2="${r2(y2)}" stroke="${stroke}" ${opts}/>`,
    );
  }

  path(points: Array<[number, number]>, stroke: string, opts = ""): void {
    const d = points
      .map(([x, y], i) => `${i === 0 ? "M" : "L"}${r2(x)} ${r2(y)}`)
      .join(" ");
    this.raw(`<path d="${d}" fill="none" stroke="${stroke}" ${opts}/>`);
  }

  circle(x: number, y: number, r: number, fill: string): void {
    this.raw(`<circle cx="${r2(x)}" cy="${r2(y)}" r="${r}" fill="${fill}"/>`);
  }

  text(x: number, y: number, s: string, opts = ""): void {
    this.raw(`<text x="${r2(x)}" y="${r2(y)}" ${opts}>${escapeXml(s)}</text>`);
  }

  render(comment?: string): string {
    const head =
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" ` +
      `height="${this.height}" viewBox="0 0 ${this.width} ${this.height}" ` +
      `font-family="Helvetica, Arial, sans-serif" font-size="11">`;
    const note = comment ? `<!-- ${escapeXml(comment)} -->\n` : "";
    return `${note}${head}\n${this.parts.join("\n")}\n</svg>\n`;
  }
}

function r2(v: number): string {
  return String(Math.round(v * 100) / 100);
}

function escapeXml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export interface Frame {
  x: Scale;
  y: Scale;
  left: number;
  top: number;
  right: number;
  bottom: number;
}

/** Plot frame with axes, tick marks and labels. */
export function drawFrame(
  svg: Svg,
  xDomain: [number, number],
  yDomain: [number, number],
  labels: { x: string; y: string; title?: string },
  margin = { left: 58, right: 16, top: 28, bottom: 42 },
): Frame {
  const left = margin.left;
  const top = margin.top;
  const right = svg.width - margin.right;
  const bottom = svg.height - margin.bottom;
  const x = linearScale(xDomain, [left, right]);
  const y = linearScale(yDomain, [bottom, top]);
  svg.rect(0, 0, svg.width, svg.height, "#ffffff");
  if (labels.title) {
    svg.text((left + right) / 2, top - 12, labels.title, 'text-anchor="middle" font-size="13"');
  }
  svg.line(left, bottom, right, bottom, "#000", 'stroke-width="1"');
  svg.line(left, top, left, bottom, "#000", 'stroke-width="1"');
  for (const tx of ticks(xDomain[0], xDomain[1])) {
    svg.line(x(tx), bottom, x(tx), bottom + 4, "#000");
    svg.text(x(tx), bottom + 16, fmt(tx), 'text-anchor="middle"');
  }
  for (const ty of ticks(yDomain[0], yDomain[1])) {
    svg.line(left - 4, y(ty), left, y(ty), "#000");
    svg.text(left - 7, y(ty) + 3.5, fmt(ty), 'text-anchor="end"');
  }
  svg.text((left + right) / 2, svg.height - 8, labels.x, 'text-anchor="middle"');
  svg.raw(
    `<text x="14" y="${(top + bottom) / 2}" text-anchor="middle" ` +
      `transform="rotate(-90 14 ${(top + bottom) / 2})">${labels.y}</text>`,
  );
  return { x, y, left, top, right, bottom };
}
