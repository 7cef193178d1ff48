import { loadCsv, num, TRAJECTORY_COLUMNS } from "./csv.js";
import { PALETTE, type FigureOption, type Series } from "./render.js";

export interface TrajectoryOptions {
  csv: string;
  observable?: string;
  trainWindow?: number; // shade [0, T] when given
}

/** Main panel: observable vs time, one curve per source (variational and,
 * when present, the exact overlay).  Inset: per-site loss on a log scale. */
export function trajectoryFigure(opts: TrajectoryOptions): FigureOption {
  const rows = loadCsv(opts.csv, TRAJECTORY_COLUMNS);
  const names = [...new Set(rows.map((r) => r.obs_name))];
  const obs = opts.observable ?? names[0];
  const selected = rows.filter((r) => r.obs_name === obs);
  if (selected.length === 0) {
    throw new Error(`observable '${obs}' not present (have: ${names.join(", ")})`);
  }
  const sources = [...new Set(selected.map((r) => r.source))].sort();

  const series: Series[] = [];
  let color = 0;
  for (const source of sources) {
    const pts = selected
      .filter((r) => r.source === source)
      .map((r) => [num(r, "t"), num(r, "value_re")] as [number, number])
      .sort((a, b) => a[0] - b[0]);
    series.push({
      name: source,
      type: "line",
      showSymbol: false,
      data: pts,
      lineStyle: source === "exact" ? { type: "dashed", width: 2 } : { width: 2 },
      color: PALETTE[color++ % PALETTE.length],
      xAxisIndex: 0,
      yAxisIndex: 0,
    });
  }

  // loss inset from the variational rows (exact rows carry no loss)
  const lossPts = selected
    .filter((r) => r.source !== "exact" && r.loss_t_per_site !== "")
    .map((r) => [num(r, "t"), Math.max(num(r, "loss_t_per_site"), 1e-300)])
    .sort((a, b) => a[0] - b[0]);
  if (lossPts.length > 0) {
    series.push({
      name: "loss/site",
      type: "line",
      showSymbol: false,
      data: lossPts,
      color: "#555",
      lineStyle: { width: 1.5 },
      xAxisIndex: 1,
      yAxisIndex: 1,
    });
  }

  const markArea =
    opts.trainWindow !== undefined
      ? {
          silent: true,
          itemStyle: { color: "rgba(144, 238, 144, 0.25)" },
          data: [[{ xAxis: 0 }, { xAxis: opts.trainWindow }]] as never,
        }
      : undefined;
  if (markArea && series.length > 0) {
    (series[0] as Record<string, unknown>).markArea = markArea;
  }

  return {
    backgroundColor: "#fff",
    title: { text: `${obs} vs t`, left: 12, top: 8 },
    legend: { top: 10, right: 16, data: sources },
    grid: [
      { left: 70, right: 30, top: 60, bottom: 60 },
      { left: 140, width: 240, top: 90, height: 140 }, // inset
    ],
    xAxis: [
      { type: "value", name: "t", gridIndex: 0 },
      { type: "value", gridIndex: 1, axisLabel: { fontSize: 9 } },
    ],
    yAxis: [
      { type: "value", name: obs, gridIndex: 0, scale: true },
      {
        type: "log",
        gridIndex: 1,
        name: "loss/N",
        nameTextStyle: { fontSize: 9 },
        axisLabel: { fontSize: 9 },
      },
    ],
    series,
  };
}
