#!/usr/bin/env node
/** CLI: render --kind <kind> --in <table.csv> --out <image.svg> */

import { writeFileSync } from "fs";
import { PlotKind, render } from "./render.js";

const KINDS = ["convergence", "heatmap", "model-select", "dist-matrix"];

function parseArgs(argv: string[]): { kind: PlotKind; input: string; output: string } {
  if (argv[0] !== "render") {
    throw new Error(`usage: mcot-render render --kind <${KINDS.join("|")}> --in <table> --out <image>`);
  }
  const opts: Record<string, string> = {};
  for (let i = 1; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key.startsWith("--") || value === undefined) {
      throw new Error(`malformed argument near '${key}'`);
    }
    opts[key.slice(2)] = value;
  }
  for (const required of ["kind", "in", "out"]) {
    if (!(required in opts)) throw new Error(`missing --${required}`);
  }
  if (!KINDS.includes(opts["kind"])) {
    throw new Error(`unknown kind '${opts["kind"]}' (choose from ${KINDS.join(", ")})`);
  }
  return { kind: opts["kind"] as PlotKind, input: opts["in"], output: opts["out"] };
}

export function main(argv: string[]): number {
  try {
    const args = parseArgs(argv);
    const svg = render({ kind: args.kind, input: args.input });
    writeFileSync(args.output, svg);
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : String(err)}`);
    return 1;
  }
}

process.exit(main(process.argv.slice(2)));
