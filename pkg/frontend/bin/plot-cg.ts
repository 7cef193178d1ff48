#!/usr/bin/env node
import { fail, parseArgs } from "../src/cli.js";
import { renderSvg, writeSvg } from "../src/render.js";
import { cgFigure } from "../src/scaling.js";

try {
  const args = parseArgs(process.argv.slice(2), []);
  if (args.csvs.length !== 1) fail("expected exactly one --csv");
  if (!args.out) fail("--out is required");
  const svg = renderSvg(cgFigure({ csv: args.csvs[0] }));
  writeSvg(args.out, svg);
  console.log(`wrote ${args.out}`);
} catch (err) {
  fail((err as Error).message);
}
