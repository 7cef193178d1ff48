#!/usr/bin/env node
import { fail, parseArgs } from "../src/cli.js";
import { renderSvg, writeSvg } from "../src/render.js";
import { trajectoryFigure } from "../src/trajectory.js";

try {
  const args = parseArgs(process.argv.slice(2), ["observable", "train-window"]);
  if (args.csvs.length !== 1) fail("expected exactly one --csv");
  if (!args.out) fail("--out is required");
  const tw = args.options.get("train-window")?.[0];
  const svg = renderSvg(
    trajectoryFigure({
      csv: args.csvs[0],
      observable: args.options.get("observable")?.[0],
      trainWindow: tw === undefined ? undefined : Number(tw),
    }),
  );
  writeSvg(args.out, svg);
  console.log(`wrote ${args.out}`);
} catch (err) {
  fail((err as Error).message);
}
