import { CG_COLUMNS, loadCsv, LOSS_COLUMNS, num } from "./csv.js";
import { PALETTE, type FigureOption, type Series } from "./render.js";

export interface ScalingOptions {
  csvs: string[];
  labels?: string[];
  /** basis-state counts aligned with csvs; enables the converged-loss
   * vs 1/M inset when more than one series is given */
  mValues?: number[];
  tailFraction?: number;
}

/** Loss learning curves for a family of runs, with a converged-loss
 * vs 1/M inset when the family is indexed by basis count. */
export function scalingFigure(opts: ScalingOptions): FigureOption {
  if (opts.csvs.length === 0) {
    throw new Error("at least one loss CSV is required");
  }
  const labels = opts.labels ?? opts.csvs.map((p, i) => `run ${i}`);
  if (labels.length !== opts.csvs.length) {
    throw new Error("labels must match the CSV list");
  }
  const tail = opts.tailFraction ?? 0.1;
  const series: Series[] = [];
  const converged: number[] = [];
  opts.csvs.forEach((path, i) => {
    const rows = loadCsv(path, LOSS_COLUMNS);
    const pts = rows
      .map((r) => [num(r, "iter"), Math.max(num(r, "loss_per_site"), 1e-300)])
      .sort((a, b) => a[0] - b[0]);
    const tailStart = Math.max(0, Math.floor(pts.length * (1 - tail)));
    const tailVals = pts.slice(tailStart).map((p) => p[1]);
    converged.push(tailVals.reduce((a, b) => a + b, 0) / tailVals.length);
    series.push({
      name: labels[i],
      type: "line",
      showSymbol: false,
      data: pts,
      color: PALETTE[i % PALETTE.length],
      xAxisIndex: 0,
      yAxisIndex: 0,
    });
  });

  const withInset =
    opts.mValues !== undefined &&
    opts.mValues.length === opts.csvs.length &&
    opts.csvs.length > 1;
  if (withInset) {
    const pts = opts
      .mValues!.map((m, i) => [1 / m, converged[i]] as [number, number])
      .sort((a, b) => a[0] - b[0]);
    series.push({
      name: "converged loss",
      type: "line",
      data: pts,
      symbolSize: 7,
      color: "#333",
      xAxisIndex: 1,
      yAxisIndex: 1,
    });
  }

  return {
    backgroundColor: "#fff",
    title: { text: "loss per site vs iteration", left: 12, top: 8 },
    legend: { top: 10, right: 16 },
    grid: [
      { left: 70, right: 30, top: 60, bottom: 60 },
      ...(withInset ? [{ right: 60, width: 230, top: 90, height: 140 }] : []),
    ],
    xAxis: [
      { type: "value", name: "iteration", gridIndex: 0 },
      ...(withInset
        ? [{ type: "value" as const, name: "1/M", gridIndex: 1, axisLabel: { fontSize: 9 } }]
        : []),
    ],
    yAxis: [
      { type: "log", name: "loss/N", gridIndex: 0 },
      ...(withInset
        ? [{ type: "log" as const, gridIndex: 1, axisLabel: { fontSize: 9 } }]
        : []),
    ],
    series,
  };
}

export interface CgOptions {
  csv: string;
  /** rows below this are treated as exactly-converged and excluded from
   * the power-law fit (the complete-basis anchor) */
  fitFloor?: number;
}

/** Coarse-grained basis error vs basis count, log-log, with the fitted
 * power-law slope annotated per evolution time. */
export function cgFigure(opts: CgOptions): FigureOption {
  const rows = loadCsv(opts.csv, CG_COLUMNS);
  const floor = opts.fitFloor ?? 1e-10;
  const times = [...new Set(rows.filter((r) => num(r, "t") > 0).map((r) => r.t))];
  if (times.length === 0) {
    throw new Error("no nonzero evolution times in the study");
  }
  const series: Series[] = [];
  const slopes: string[] = [];
  times.forEach((t, i) => {
    const pts = rows
      .filter((r) => r.t === t)
      .map((r) => [num(r, "m"), num(r, "delta")] as [number, number])
      .sort((a, b) => a[0] - b[0]);
    const fitPts = pts.filter(([, d]) => d > floor);
    if (fitPts.length >= 2) {
      const xs = fitPts.map(([m]) => Math.log(m));
      const ys = fitPts.map(([, d]) => Math.log(d));
      const xm = xs.reduce((a, b) => a + b) / xs.length;
      const ym = ys.reduce((a, b) => a + b) / ys.length;
      let sxx = 0;
      let sxy = 0;
      for (let k = 0; k < xs.length; k++) {
        sxx += (xs[k] - xm) ** 2;
        sxy += (xs[k] - xm) * (ys[k] - ym);
      }
      slopes.push(`t=${t}: slope ${(sxy / sxx).toFixed(2)}`);
    }
    series.push({
      name: `t = ${t}`,
      type: "line",
      data: pts.filter(([, d]) => d > 0),
      symbolSize: 7,
      color: PALETTE[i % PALETTE.length],
    });
  });

  return {
    backgroundColor: "#fff",
    title: {
      text: "basis truncation error vs basis count",
      subtext: slopes.join("    "),
      left: 12,
      top: 8,
    },
    legend: { top: 10, right: 16 },
    grid: { left: 80, right: 30, top: 80, bottom: 60 },
    xAxis: { type: "log", name: "M" },
    yAxis: { type: "log", name: "delta" },
    series,
  };
}
