export { parseRecords, expectedHeader, runLabel } from "./records.js";
export type { RunRecords, Manifest } from "./records.js";
export { render } from "./figures.js";
export type { FigureKind, PlotJob } from "./figures.js";
