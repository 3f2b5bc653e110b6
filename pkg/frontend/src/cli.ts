#!/usr/bin/env node
/**
 * Render one benchmark figure from bench CSV input.
 *
 * Usage:
 *   node dist/cli.js --kind distance --out distance.svg out/distance.csv
 *
 * Kinds: distance | latency | mixed | scaling. Multiple input CSVs are
 * concatenated before filtering. Errors (missing columns, header-only
 * input, unknown kind) exit nonzero without writing the output file.
 */

import { CsvError } from "./csv.js";
import { FigureError, FigureKind, KINDS, render } from "./figures.js";

export function run(argv: string[]): number {
  const inputs: string[] = [];
  let kind: string | undefined;
  let out: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--kind") kind = argv[++i];
    else if (arg === "--out") out = argv[++i];
    else if (arg === "--help" || arg === "-h") {
      console.log(`usage: cli --kind <${KINDS.join("|")}> --out <file.svg> <bench.csv> [more.csv ...]`);
      return 0;
    } else if (arg.startsWith("--")) {
      console.error(`error: unknown flag ${arg}`);
      return 2;
    } else inputs.push(arg);
  }
  if (!kind || !out || inputs.length === 0) {
    console.error("error: --kind, --out and at least one input CSV are required");
    return 2;
  }
  try {
    const written = render({ inputs, kind: kind as FigureKind, output: out });
    console.log(`wrote ${written}`);
    return 0;
  } catch (err) {
    if (err instanceof FigureError || err instanceof CsvError ||
        (err as NodeJS.ErrnoException).code === "ENOENT") {
      console.error(`error: ${(err as Error).message}`);
      return 1;
    }
    throw err;
  }
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("cli.js") || entry.endsWith("cli.ts")) {
  process.exit(run(process.argv.slice(2)));
}
