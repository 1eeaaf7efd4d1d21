/**
 * Parsing and validation of ttosim records files.
 *
 * A records file is a CSV with one header line naming the columns
 * `t, Z_1..Z_n, J_1..J_{n-1}, S_L, S_R, S, I_LR, N_L, trace, max_chi, K,
 * cum_trunc` followed by one row per measurement. A JSON manifest sidecar
 * (`manifest.json` next to the records, or `<stem>.manifest.json`) carries
 * the run configuration and derived quantities such as the spin-current
 * arrival time.
 */

import * as fs from "node:fs";
import * as path from "node:path";

export interface RunRecords {
  /** source path, used for labels */
  file: string;
  nSites: number;
  times: number[];
  /** z[i][j] = <Z_{j+1}> at times[i] */
  z: number[][];
  /** current[i][j] = <J_{j+1}> at times[i] */
  current: number[][];
  sLeft: number[];
  sRight: number[];
  sTotal: number[];
  mutualInformation: number[];
  logNegativity: number[];
  trace: number[];
  manifest: Manifest | null;
}

export interface Manifest {
  config?: {
    n_sites?: number;
    anisotropy?: number;
    rate?: number;
    t_max?: number;
    [key: string]: unknown;
  };
  current_arrival_time?: number | null;
  [key: string]: unknown;
}

const TAIL_COLUMNS = [
  "S_L",
  "S_R",
  "S",
  "I_LR",
  "N_L",
  "trace",
  "max_chi",
  "K",
  "cum_trunc",
];

export function expectedHeader(nSites: number): string[] {
  const cols = ["t"];
  for (let j = 1; j <= nSites; j++) cols.push(`Z_${j}`);
  for (let j = 1; j < nSites; j++) cols.push(`J_${j}`);
  return cols.concat(TAIL_COLUMNS);
}

function inferSites(header: string[]): number {
  const n = header.filter((c) => /^Z_\d+$/.test(c)).length;
  if (n < 1) {
    throw new Error("records header carries no Z_j columns");
  }
  return n;
}

export function parseRecords(file: string): RunRecords {
  const text = fs.readFileSync(file, "utf8").trim();
  if (!text) {
    throw new Error(`records file is empty: ${file}`);
  }
  const lines = text.split(/\r?\n/);
  const header = lines[0].split(",").map((s) => s.trim());
  const nSites = inferSites(header);
  const expected = expectedHeader(nSites);
  if (header.length !== expected.length || header.some((c, i) => c !== expected[i])) {
    throw new Error(
      `records header does not match the ttosim schema for ${nSites} sites: ${file}`,
    );
  }
  if (lines.length < 2) {
    throw new Error(`records file has a header but no rows: ${file}`);
  }
  const out: RunRecords = {
    file,
    nSites,
    times: [],
    z: [],
    current: [],
    sLeft: [],
    sRight: [],
    sTotal: [],
    mutualInformation: [],
    logNegativity: [],
    trace: [],
    manifest: loadManifest(file),
  };
  for (const line of lines.slice(1)) {
    const cells = line.split(",").map(Number);
    if (cells.length !== expected.length || cells.some((v) => Number.isNaN(v))) {
      throw new Error(`bad records row in ${file}: ${line.slice(0, 60)}`);
    }
    let k = 0;
    out.times.push(cells[k++]);
    out.z.push(cells.slice(k, k + nSites));
    k += nSites;
    out.current.push(cells.slice(k, k + nSites - 1));
    k += nSites - 1;
    out.sLeft.push(cells[k++]);
    out.sRight.push(cells[k++]);
    out.sTotal.push(cells[k++]);
    out.mutualInformation.push(cells[k++]);
    out.logNegativity.push(cells[k++]);
    out.trace.push(cells[k++]);
  }
  return out;
}

function loadManifest(recordsFile: string): Manifest | null {
  const dir = path.dirname(recordsFile);
  const stem = path.basename(recordsFile).replace(/\.csv$/, "");
  const candidates = [
    path.join(dir, `${stem}.manifest.json`),
    path.join(dir, "manifest.json"),
  ];
  for (const cand of candidates) {
    if (fs.existsSync(cand)) {
      return JSON.parse(fs.readFileSync(cand, "utf8")) as Manifest;
    }
  }
  return null;
}

/** Label for legends: anisotropy from the manifest, else the file stem. */
export function runLabel(run: RunRecords): string {
  const delta = run.manifest?.config?.anisotropy;
  if (typeof delta === "number") {
    return `Δ = ${delta}`;
  }
  return path.basename(run.file).replace(/\.csv$/, "");
}
