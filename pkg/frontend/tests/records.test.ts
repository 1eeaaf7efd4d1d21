import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { describe, expect, it } from "vitest";

import { expectedHeader, parseRecords, runLabel } from "../src/records.js";

const GOLDENS = path.resolve(__dirname, "..", "..", "goldens");
const BALLISTIC = path.join(GOLDENS, "l8_delta0.5_gamma1.csv");

function tmpFile(content: string): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "figtest-"));
  const file = path.join(dir, "records.csv");
  fs.writeFileSync(file, content);
  return file;
}

describe("expectedHeader", () => {
  it("matches the documented schema", () => {
    expect(expectedHeader(2)).toEqual([
      "t", "Z_1", "Z_2", "J_1",
      "S_L", "S_R", "S", "I_LR", "N_L", "trace", "max_chi", "K", "cum_trunc",
    ]);
  });
});

describe("parseRecords", () => {
  it("parses a golden 8-site run", () => {
    const run = parseRecords(BALLISTIC);
    expect(run.nSites).toBe(8);
    expect(run.times.length).toBeGreaterThan(50);
    expect(run.times[0]).toBe(0);
    expect(run.z[0]).toHaveLength(8);
    expect(run.current[0]).toHaveLength(7);
    // quench from the all-down state
    for (const z of run.z[0]) expect(z).toBeCloseTo(-1, 10);
    for (const j of run.current[0]) expect(j).toBeCloseTo(0, 10);
    // trace stays normalized
    for (const tr of run.trace) expect(tr).toBeCloseTo(1, 6);
  });

  it("loads the manifest sidecar", () => {
    const run = parseRecords(BALLISTIC);
    expect(run.manifest).not.toBeNull();
    expect(run.manifest?.config?.anisotropy).toBe(0.5);
    expect(typeof run.manifest?.current_arrival_time).toBe("number");
    expect(runLabel(run)).toContain("0.5");
  });

  it("rejects a schema mismatch", () => {
    const file = tmpFile("t,Z_1,Z_2,bogus\n0,1,1,1\n");
    expect(() => parseRecords(file)).toThrow(/schema/);
  });

  it("rejects empty input", () => {
    const file = tmpFile("");
    expect(() => parseRecords(file)).toThrow(/empty/);
  });

  it("rejects header-only input", () => {
    const file = tmpFile(expectedHeader(2).join(",") + "\n");
    expect(() => parseRecords(file)).toThrow(/no rows/);
  });

  it("rejects malformed rows", () => {
    const file = tmpFile(expectedHeader(2).join(",") + "\n1,2,notanumber\n");
    expect(() => parseRecords(file)).toThrow(/bad records row/);
  });
});
