#!/usr/bin/env node
/**
 * mlkpde-plots render --kind <kind> --in <csv...> --out <png>
 *
 * Kinds: fe | truncation-overlay | sl-overlay | level-grid | cost-compare.
 * Writes the PNG plus a deterministic <png>.legend.json sidecar with the
 * plotted data and fitted rates.  Nothing is written on schema errors.
 */

import * as fs from "fs";
import * as path from "path";

import { readStudyCsv, SchemaError } from "./csv";
import { buildFigure, FIGURE_KINDS, FigureKind, legendDump } from "./scene";
import { renderFigure } from "./render";

function usage(): never {
  console.error(
    "usage: mlkpde-plots render --kind <" +
      FIGURE_KINDS.join("|") +
      "> --in <csv...> --out <png>\n" +
      "       mlkpde-plots render-all --examples <dir> --out <dir>"
  );
  process.exit(2);
}

interface Args {
  command: string;
  kind?: string;
  inputs: string[];
  out?: string;
  examples?: string;
}

function parseArgs(argv: string[]): Args {
  if (argv.length === 0) usage();
  const args: Args = { command: argv[0], inputs: [] };
  let i = 1;
  while (i < argv.length) {
    const a = argv[i];
    if (a === "--kind") {
      args.kind = argv[++i];
    } else if (a === "--in") {
      while (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
        args.inputs.push(argv[++i]);
      }
    } else if (a === "--out") {
      args.out = argv[++i];
    } else if (a === "--examples") {
      args.examples = argv[++i];
    } else {
      usage();
    }
    i++;
  }
  return args;
}

export function renderOne(kind: FigureKind, inputs: string[], out: string): void {
  const parsed = inputs.map((p) => ({ rows: readStudyCsv(p), source: p }));
  const fig = buildFigure(kind, parsed);
  renderFigure(fig, out);
  fs.writeFileSync(out + ".legend.json", legendDump(fig, inputs.map((p) => path.basename(p))));
}

function findExample(dir: string, stem: string): string {
  const hit = fs.readdirSync(dir).find((f) => f.startsWith(stem) && f.endsWith(".csv"));
  if (!hit) throw new SchemaError(`${dir}: no ${stem}*.csv example found`);
  return path.join(dir, hit);
}

export function renderAll(examplesDir: string, outDir: string): string[] {
  const fe = findExample(examplesDir, "fe_");
  const jobs: [FigureKind, string[], string][] = [
    ["fe", [fe], "fe.png"],
    ["truncation-overlay", [findExample(examplesDir, "trunc_"), fe], "truncation.png"],
    ["sl-overlay", [findExample(examplesDir, "sl_"), fe], "sl.png"],
    ["level-grid", [findExample(examplesDir, "level_")], "level.png"],
    ["cost-compare", [findExample(examplesDir, "cost_")], "cost.png"],
  ];
  const written: string[] = [];
  for (const [kind, inputs, name] of jobs) {
    const out = path.join(outDir, name);
    renderOne(kind, inputs, out);
    written.push(out);
  }
  return written;
}

export function main(argv: string[]): number {
  const args = parseArgs(argv);
  try {
    if (args.command === "render") {
      if (!args.kind || !args.out || args.inputs.length === 0) usage();
      if (!FIGURE_KINDS.includes(args.kind as FigureKind)) {
        console.error(
          `mlkpde-plots: unknown kind "${args.kind}" (choose from ${FIGURE_KINDS.join(", ")})`
        );
        return 2;
      }
      renderOne(args.kind as FigureKind, args.inputs, args.out);
      console.log(`${args.kind} -> ${args.out} (+ ${args.out}.legend.json)`);
      return 0;
    }
    if (args.command === "render-all") {
      if (!args.examples || !args.out) usage();
      for (const out of renderAll(args.examples, args.out)) {
        console.log(out);
      }
      return 0;
    }
    usage();
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`mlkpde-plots: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
