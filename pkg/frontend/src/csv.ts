/**
 * Strict reader for the bench CSV schema.
 *
 * Column order is fixed by the harness; we key rows by header name anyway so
 * a reordered-but-complete file still parses, while a missing column is a
 * hard error naming what is absent.
 */

export const BENCH_COLUMNS = [
  "experiment",
  "protocol",
  "chain_length",
  "distance_from_tail",
  "offered_rate",
  "completed_qps",
  "latency_mean_us",
  "latency_p95_us",
  "latency_p99_us",
  "wire_msgs_per_query",
  "dirty_commits",
  "drops",
] as const;

export interface BenchRow {
  experiment: string;
  protocol: string;
  chain_length: number;
  distance_from_tail: number;
  offered_rate: number;
  completed_qps: number;
  latency_mean_us: number;
  latency_p95_us: number;
  latency_p99_us: number;
  wire_msgs_per_query: number;
  dirty_commits: number;
  drops: number;
}

export class CsvError extends Error {}

export function parseBenchCsv(text: string, source = "<csv>"): BenchRow[] {
  const lines = text.split(/\r?\n/).filter((line) => line.trim().length > 0);
  if (lines.length === 0) {
    throw new CsvError(`${source}: empty file`);
  }
  const header = lines[0].split(",");
  for (const col of BENCH_COLUMNS) {
    if (!header.includes(col)) {
      throw new CsvError(`${source}: missing column '${col}'`);
    }
  }
  if (lines.length === 1) {
    throw new CsvError(`${source}: header only, no data rows`);
  }
  const index = new Map(header.map((name, i) => [name, i]));
  const rows: BenchRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== header.length) {
      throw new CsvError(`${source}: line ${i + 1} has ${cells.length} cells, expected ${header.length}`);
    }
    const cell = (name: string) => cells[index.get(name)!];
    const num = (name: string) => {
      const value = Number(cell(name));
      if (!Number.isFinite(value)) {
        throw new CsvError(`${source}: line ${i + 1}: '${cell(name)}' is not a number in '${name}'`);
      }
      return value;
    };
    rows.push({
      experiment: cell("experiment"),
      protocol: cell("protocol"),
      chain_length: num("chain_length"),
      distance_from_tail: num("distance_from_tail"),
      offered_rate: num("offered_rate"),
      completed_qps: num("completed_qps"),
      latency_mean_us: num("latency_mean_us"),
      latency_p95_us: num("latency_p95_us"),
      latency_p99_us: num("latency_p99_us"),
      wire_msgs_per_query: num("wire_msgs_per_query"),
      dirty_commits: num("dirty_commits"),
      drops: num("drops"),
    });
  }
  return rows;
}
