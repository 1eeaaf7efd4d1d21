#!/usr/bin/env node
/**
 * figures <heatmap|timeseries|scaling> <records.csv...> -o <image.svg>
 *
 * Reads ttosim records files (plus their JSON manifest sidecars when
 * present) and writes a deterministic SVG. `--no-timestamp` suppresses the
 * generated-at comment so repeated runs are byte-identical.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { parseRecords } from "./records.js";
import { FigureKind, render } from "./figures.js";

const KINDS: FigureKind[] = ["heatmap", "timeseries", "scaling"];

export function main(argv: string[]): number {
  const args = [...argv];
  const kind = args.shift();
  if (!kind || !KINDS.includes(kind as FigureKind)) {
    process.stderr.write(`usage: figures <${KINDS.join("|")}> <records.csv...> -o <image.svg>\n`);
    return 2;
  }
  let out: string | null = null;
  let stamp = true;
  const inputs: string[] = [];
  while (args.length) {
    const a = args.shift()!;
    if (a === "-o" || a === "--output") {
      out = args.shift() ?? null;
    } else if (a === "--no-timestamp") {
      stamp = false;
    } else {
      inputs.push(a);
    }
  }
  if (!out || inputs.length === 0) {
    process.stderr.write("need at least one records file and -o <image.svg>\n");
    return 2;
  }
  if (process.env.FIGURES_TEST_MODE === "1") {
    stamp = false;
  }
  try {
    const runs = inputs.map(parseRecords);
    const svg = render({
      kind: kind as FigureKind,
      runs,
      timestamp: stamp ? new Date().toISOString() : null,
    });
    fs.mkdirSync(path.dirname(path.resolve(out)), { recursive: true });
    fs.writeFileSync(out, svg);
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
  return 0;
}

const entry = process.argv[1] ? path.resolve(process.argv[1]) : "";
if (entry && import.meta.url === `file://${entry}`) {
  process.exit(main(process.argv.slice(2)));
}
