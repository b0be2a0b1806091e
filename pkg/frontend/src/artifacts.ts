/**
 * Artifacts pane: which files the session has produced, and charts for the
 * tabular ones.
 *
 * Sampled-surface files are whitespace-separated columns with `#` comment
 * headers; the last header line names the columns. A chart plots the first
 * coordinate against the sampled field (the final column). File paths
 * deduplicate, so replays and reconnects never grow a second chart for the
 * same artifact.
 */

import type { ConsoleEvent } from "./events.js";

export interface ArtifactsState {
  files: string[]; // arrival order, unique
  invocations: Array<{ tool: string; isError: boolean; summary: string }>;
}

export function emptyArtifacts(): ArtifactsState {
  return { files: [], invocations: [] };
}

export function reduceArtifacts(
  state: ArtifactsState,
  event: ConsoleEvent,
): ArtifactsState {
  if (event.kind === "file-produced") {
    const path = String(event.payload.path ?? "");
    if (path === "" || state.files.includes(path)) return state;
    return { ...state, files: [...state.files, path] };
  }
  if (event.kind === "tool-invocation") {
    const entry = {
      tool: String(event.payload.tool ?? ""),
      isError: event.payload.is_error === true,
      summary: String(event.payload.summary ?? ""),
    };
    return { ...state, invocations: [...state.invocations, entry] };
  }
  return state;
}

export function isSampledSurface(path: string): boolean {
  return path.endsWith(".raw");
}

/** Paths that get a chart, one each, in arrival order. */
export function chartPaths(state: ArtifactsState): string[] {
  return state.files.filter(isSampledSurface);
}

export interface ColumnTable {
  names: string[];
  columns: number[][];
  rows: number;
}

export class BadTable extends Error {}

export function parseColumns(text: string): ColumnTable {
  let names: string[] = [];
  const rows: number[][] = [];
  for (const line of text.split("\n")) {
    const trimmed = line.trim();
    if (trimmed === "") continue;
    if (trimmed.startsWith("#")) {
      names = trimmed.slice(1).trim().split(/\s+/);
      continue;
    }
    const values = trimmed.split(/\s+/).map(Number);
    if (values.some((v) => Number.isNaN(v))) {
      throw new BadTable(`non-numeric row: ${trimmed}`);
    }
    if (rows.length > 0 && values.length !== rows[0]!.length) {
      throw new BadTable(
        `ragged row: expected ${rows[0]!.length} columns, got ${values.length}`,
      );
    }
    rows.push(values);
  }
  if (rows.length === 0) throw new BadTable("no data rows");
  const width = rows[0]!.length;
  const columns = Array.from({ length: width }, (_, index) =>
    rows.map((row) => row[index]!),
  );
  if (names.length !== width) {
    names = Array.from({ length: width }, (_, index) => `c${index}`);
  }
  return { names, columns, rows: rows.length };
}

export interface ChartSeries {
  x: number[];
  y: number[];
  xLabel: string;
  yLabel: string;
}

/** First coordinate column against the sampled field (last column). */
export function chartSeries(table: ColumnTable): ChartSeries {
  const last = table.columns.length - 1;
  return {
    x: table.columns[0]!,
    y: table.columns[last]!,
    xLabel: table.names[0]!,
    yLabel: table.names[last]!,
  };
}

export const CHART_WIDTH = 360;
export const CHART_HEIGHT = 240;
const PAD = 28;

function scale(values: number[], span: number): (value: number) => number {
  const low = Math.min(...values);
  const high = Math.max(...values);
  const range = high - low || 1;
  return (value) => PAD + ((value - low) / range) * (span - 2 * PAD);
}

/** Standalone scatter rendering; no canvas, so it is testable as a string. */
export function scatterSvg(series: ChartSeries, title: string): string {
  const sx = scale(series.x, CHART_WIDTH);
  const sy = scale(series.y, CHART_HEIGHT);
  const dots = series.x
    .map((value, index) => {
      const cx = sx(value).toFixed(1);
      const cy = (CHART_HEIGHT - sy(series.y[index]!)).toFixed(1);
      return `<circle cx="${cx}" cy="${cy}" r="2.5" />`;
    })
    .join("");
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${CHART_WIDTH} ` +
    `${CHART_HEIGHT}" class="chart"><title>${title}: ${series.yLabel} vs ` +
    `${series.xLabel}</title>${dots}</svg>`
  );
}
