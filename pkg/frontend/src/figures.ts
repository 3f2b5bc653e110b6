/**
 * The four figure kinds, mapped from bench CSV rows to chart specs.
 *
 * Each kind filters the rows it understands and overlays one series per
 * protocol; the mixed figure carries the dirty-commit budget on a right
 * axis. An input with none of the kind's rows is an error, not an empty
 * picture.
 */

import { readFileSync, writeFileSync } from "fs";

import { BenchRow, parseBenchCsv } from "./csv.js";
import { ChartError, ChartSpec, Series, renderChart } from "./svg.js";

export const KINDS = ["distance", "latency", "mixed", "scaling"] as const;
export type FigureKind = (typeof KINDS)[number];

export interface FigureSpec {
  inputs: string[];
  kind: FigureKind;
  output: string;
}

export class FigureError extends Error {}

const COLORS: Record<string, string> = {
  netcraq: "#1f77b4",
  baseline: "#d62728",
};

function color(protocol: string): string {
  return COLORS[protocol] ?? "#2ca02c";
}

function protocols(rows: BenchRow[]): string[] {
  return [...new Set(rows.map((r) => r.protocol))];
}

function requireRows(rows: BenchRow[], kind: string): void {
  if (rows.length === 0) {
    throw new FigureError(`no '${kind}' rows in the input CSV`);
  }
}

function perProtocol(rows: BenchRow[], xOf: (r: BenchRow) => number,
                     yOf: (r: BenchRow) => number): Series[] {
  return protocols(rows).map((p) => ({
    label: p,
    color: color(p),
    points: rows.filter((r) => r.protocol === p)
                .map((r) => [xOf(r), yOf(r)] as [number, number]),
  }));
}

export function distanceFigure(rows: BenchRow[]): ChartSpec {
  const data = rows.filter((r) => r.experiment === "distance");
  requireRows(data, "distance");
  return {
    title: "Max read QPS vs distance from tail",
    xLabel: "distance from tail (hops)",
    yLabel: "completed QPS",
    xTicks: [...new Set(data.map((r) => r.distance_from_tail))].sort((a, b) => a - b),
    series: perProtocol(data, (r) => r.distance_from_tail, (r) => r.completed_qps),
  };
}

export function latencyFigure(rows: BenchRow[]): ChartSpec {
  const data = rows.filter((r) => r.experiment === "latency");
  requireRows(data, "latency");
  const mean = perProtocol(data, (r) => r.offered_rate, (r) => r.latency_mean_us);
  const p99: Series[] = protocols(data).map((p) => ({
    label: `${p} p99`,
    color: color(p),
    dash: "6 4",
    points: data.filter((r) => r.protocol === p)
                .map((r) => [r.offered_rate, r.latency_p99_us] as [number, number]),
  }));
  return {
    title: "Response latency vs offered QPS",
    xLabel: "offered rate (QPS)",
    yLabel: "latency (simulated us)",
    logY: true,
    series: [...mean, ...p99],
  };
}

/** mixed rows carry their write fraction in the experiment id: mixed_wf0.25 */
export function writeFraction(experiment: string): number {
  const match = /^mixed_wf([0-9.]+)$/.exec(experiment);
  if (!match) {
    throw new FigureError(`not a mixed-workload experiment id: '${experiment}'`);
  }
  return Number(match[1]);
}

export function mixedFigure(rows: BenchRow[]): ChartSpec {
  const data = rows.filter((r) => r.experiment.startsWith("mixed_wf"));
  requireRows(data, "mixed_wf*");
  const qps = perProtocol(data, (r) => writeFraction(r.experiment),
                          (r) => r.completed_qps);
  const dirty: Series[] = protocols(data)
    .filter((p) => data.some((r) => r.protocol === p && r.dirty_commits > 0))
    .map((p) => ({
      label: `${p} dirty commits`,
      color: "#7f7f7f",
      dash: "3 3",
      axis: "right",
      points: data.filter((r) => r.protocol === p)
                  .map((r) => [writeFraction(r.experiment), r.dirty_commits] as [number, number]),
    }));
  return {
    title: "Performance under mixed read/write workloads",
    xLabel: "write fraction",
    yLabel: "completed read QPS",
    rightYLabel: "dirty commits",
    xTicks: [...new Set(data.map((r) => writeFraction(r.experiment)))].sort((a, b) => a - b),
    series: [...qps, ...dirty],
  };
}

export function scalingFigure(rows: BenchRow[]): ChartSpec {
  const data = rows.filter((r) => r.experiment === "scaling");
  requireRows(data, "scaling");
  return {
    title: "Read throughput vs chain length",
    xLabel: "chain length (nodes)",
    yLabel: "completed QPS",
    xTicks: [...new Set(data.map((r) => r.chain_length))].sort((a, b) => a - b),
    series: perProtocol(data, (r) => r.chain_length, (r) => r.completed_qps),
  };
}

const BUILDERS: Record<FigureKind, (rows: BenchRow[]) => ChartSpec> = {
  distance: distanceFigure,
  latency: latencyFigure,
  mixed: mixedFigure,
  scaling: scalingFigure,
};

/** Render a figure; the output file is only written when rendering succeeds. */
export function render(spec: FigureSpec): string {
  if (!KINDS.includes(spec.kind)) {
    throw new FigureError(`unknown figure kind '${spec.kind}' (use ${KINDS.join("|")})`);
  }
  const rows = spec.inputs.flatMap((path) =>
    parseBenchCsv(readFileSync(path, "utf8"), path));
  let svg: string;
  try {
    svg = renderChart(BUILDERS[spec.kind](rows));
  } catch (err) {
    if (err instanceof ChartError) throw new FigureError(err.message);
    throw err;
  }
  writeFileSync(spec.output, svg);
  return spec.output;
}
