#!/usr/bin/env node
import { fail, parseArgs } from "../src/cli.js";
import { renderSvg, writeSvg } from "../src/render.js";
import { scalingFigure } from "../src/scaling.js";

try {
  const args = parseArgs(process.argv.slice(2), ["label", "m"]);
  if (args.csvs.length === 0) fail("at least one --csv is required");
  if (!args.out) fail("--out is required");
  const svg = renderSvg(
    scalingFigure({
      csvs: args.csvs,
      labels: args.options.get("label"),
      mValues: args.options.get("m")?.map(Number),
    }),
  );
  writeSvg(args.out, svg);
  console.log(`wrote ${args.out}`);
} catch (err) {
  fail((err as Error).message);
}
