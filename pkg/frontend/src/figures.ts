/**
 * The three figure kinds rendered from records files:
 *
 * - heatmap:    spatio-temporal spin-current profile of one run (bond index
 *               against time, symmetric diverging color scale so back-flow
 *               is visible);
 * - timeseries: logarithmic negativity and mutual information against time
 *               for one or more runs, with the spin-current arrival time
 *               marked when the manifest provides it;
 * - scaling:    final-time logarithmic negativity against system size,
 *               one series per anisotropy.
 */

import { Manifest, RunRecords, runLabel } from "./records.js";
import {
  SERIES_COLORS,
  Svg,
  divergingColor,
  drawFrame,
  fmt,
  linearScale,
} from "./svg.js";

export type FigureKind = "heatmap" | "timeseries" | "scaling";

export interface PlotJob {
  kind: FigureKind;
  runs: RunRecords[];
  width?: number;
  height?: number;
  /** suppress the generated-at comment (test mode) */
  timestamp?: string | null;
}

export function render(job: PlotJob): string {
  if (job.runs.length === 0) {
    throw new Error("no input records");
  }
  const width = job.width ?? 640;
  const height = job.height ?? 420;
  const svg = new Svg(width, height);
  switch (job.kind) {
    case "heatmap":
      renderHeatmap(svg, job);
      break;
    case "timeseries":
      renderTimeseries(svg, job);
      break;
    case "scaling":
      renderScaling(svg, job);
      break;
    default:
      throw new Error(`unknown figure kind ${(job as PlotJob).kind}`);
  }
  const comment = job.timestamp ? `generated ${job.timestamp}` : undefined;
  return svg.render(comment);
}

function renderHeatmap(svg: Svg, job: PlotJob): void {
  const runs = job.runs;
  const n = runs[0].nSites;
  if (runs.some((r) => r.nSites !== n)) {
    throw new Error("heatmap inputs must share the chain length");
  }
  // multiple files concatenate along time (e.g. resumed segments)
  const times: number[] = [];
  const rows: number[][] = [];
  for (const run of runs) {
    for (let i = 0; i < run.times.length; i++) {
      if (times.length && run.times[i] <= times[times.length - 1]) continue;
      times.push(run.times[i]);
      rows.push(run.current[i]);
    }
  }
  if (n < 2) {
    throw new Error("heatmap needs at least one bond");
  }
  const vmax = Math.max(1e-12, ...rows.flat().map(Math.abs));
  const frame = drawFrame(
    svg,
    [times[0], times[times.length - 1] || 1],
    [0.5, n - 0.5],
    { x: "time t [1/J]", y: "bond j", title: "spin current" },
    { left: 58, right: 74, top: 28, bottom: 42 },
  );
  for (let i = 0; i < times.length; i++) {
    const t0 = i === 0 ? times[0] : (times[i - 1] + times[i]) / 2;
    const t1 = i === times.length - 1 ? times[i] : (times[i] + times[i + 1]) / 2;
    const x0 = frame.x(t0);
    const w = Math.max(frame.x(t1) - x0, 0.5);
    for (let j = 0; j < n - 1; j++) {
      const y1 = frame.y(j + 1.5);
      const h = frame.y(j + 0.5) - y1;
      svg.rect(x0, y1, w, h, divergingColor(rows[i][j] / vmax));
    }
  }
  // color bar
  const barX = svg.width - 56;
  const barTop = frame.top;
  const barH = frame.bottom - frame.top;
  const steps = 48;
  for (let k = 0; k < steps; k++) {
    const v = 1 - (2 * k) / (steps - 1);
    svg.rect(barX, barTop + (k * barH) / steps, 14, barH / steps + 0.5, divergingColor(v));
  }
  svg.text(barX + 18, barTop + 8, fmt(vmax));
  svg.text(barX + 18, barTop + barH / 2 + 3, "0");
  svg.text(barX + 18, barTop + barH, fmt(-vmax));
}

function arrivalTime(manifest: Manifest | null): number | null {
  const t = manifest?.current_arrival_time;
  return typeof t === "number" ? t : null;
}

function renderTimeseries(svg: Svg, job: PlotJob): void {
  const runs = job.runs;
  const tMax = Math.max(...runs.map((r) => r.times[r.times.length - 1]));
  const yMax = Math.max(
    1e-3,
    ...runs.flatMap((r) => [...r.logNegativity, ...r.mutualInformation]),
  );
  const frame = drawFrame(svg, [0, tMax], [0, 1.05 * yMax], {
    x: "time t [1/J]",
    y: "N_L, I_LR",
    title: "entanglement and correlations",
  });
  runs.forEach((run, idx) => {
    const color = SERIES_COLORS[idx % SERIES_COLORS.length];
    const pts = (ys: number[]): Array<[number, number]> =>
      run.times.map((t, i) => [frame.x(t), frame.y(ys[i])] as [number, number]);
    svg.path(pts(run.logNegativity), color, 'stroke-width="1.8"');
    svg.path(pts(run.mutualInformation), color, 'stroke-width="1.2" stroke-dasharray="5 3"');
    const arrive = arrivalTime(run.manifest);
    if (arrive !== null) {
      svg.line(frame.x(arrive), frame.top, frame.x(arrive), frame.bottom, color, 'stroke-dasharray="2 3" stroke-width="1"');
    }
    svg.text(frame.right - 6, frame.top + 14 + 14 * idx, runLabel(run), `text-anchor="end" fill="${color}"`);
  });
  svg.text(frame.left + 6, frame.top + 14, "solid: N_L   dashed: I_LR");
}

function renderScaling(svg: Svg, job: PlotJob): void {
  // group runs by anisotropy; x axis is the chain length
  const groups = new Map<string, Array<{ n: number; value: number }>>();
  for (const run of job.runs) {
    const key = runLabel(run);
    const point = {
      n: run.nSites,
      value: run.logNegativity[run.logNegativity.length - 1],
    };
    if (!groups.has(key)) groups.set(key, []);
    groups.get(key)!.push(point);
  }
  const allN = job.runs.map((r) => r.nSites);
  const allV = [...groups.values()].flat().map((p) => p.value);
  const frame = drawFrame(
    svg,
    [Math.min(...allN) - 1, Math.max(...allN) + 1],
    [0, 1.1 * Math.max(1e-3, ...allV)],
    { x: "chain length", y: "N_L(t*)", title: "size scaling of entanglement" },
  );
  let idx = 0;
  for (const [label, pts] of [...groups.entries()].sort()) {
    const color = SERIES_COLORS[idx % SERIES_COLORS.length];
    pts.sort((a, b) => a.n - b.n);
    svg.path(
      pts.map((p) => [frame.x(p.n), frame.y(p.value)] as [number, number]),
      color,
      'stroke-width="1.5"',
    );
    for (const p of pts) {
      svg.circle(frame.x(p.n), frame.y(p.value), 3, color);
    }
    svg.text(frame.right - 6, frame.top + 14 + 14 * idx, label, `text-anchor="end" fill="${color}"`);
    idx++;
  }
}
