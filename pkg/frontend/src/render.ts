import { mkdirSync, writeFileSync } from "node:fs";
import { createRequire } from "node:module";
import { dirname } from "node:path";

// echarts ships CommonJS; require() sidesteps the ESM default-export
// mismatch in its type declarations
const require_ = createRequire(import.meta.url);
// eslint-disable-next-line @typescript-eslint/no-var-requires
const echarts = require_("echarts");

/** echarts' own option types are unavailable through the NodeNext type
 * resolution; the figures only need loosely structured option objects. */
export type FigureOption = Record<string, unknown>;
export type Series = Record<string, unknown>;

export const WIDTH = 900;
export const HEIGHT = 560;

/** Render an echarts option to an SVG string (server-side, no DOM). */
export function renderSvg(option: FigureOption): string {
  const chart = echarts.init(null, undefined, {
    renderer: "svg",
    ssr: true,
    width: WIDTH,
    height: HEIGHT,
  });
  chart.setOption({ animation: false, ...option });
  const svg = chart.renderToSVGString();
  chart.dispose();
  if (!svg || svg.length < 100) {
    throw new Error("renderer produced an empty document");
  }
  return svg;
}

export function writeSvg(path: string, svg: string): void {
  mkdirSync(dirname(path), { recursive: true });
  writeFileSync(path, svg, "utf-8");
}

export const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#17becf",
];
