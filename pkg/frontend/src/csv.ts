import { readFileSync } from "node:fs";
import Papa from "papaparse";

/** Parse a CSV file into records, failing fast on missing columns. */
export function loadCsv(
  path: string,
  requiredColumns: string[],
): Record<string, string>[] {
  const text = readFileSync(path, "utf-8");
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    throw new Error(`${path}: ${parsed.errors[0].message}`);
  }
  const rows = parsed.data;
  if (rows.length === 0) {
    throw new Error(`${path}: no data rows`);
  }
  const columns = Object.keys(rows[0]);
  for (const col of requiredColumns) {
    if (!columns.includes(col)) {
      throw new Error(`${path}: missing column '${col}' (found: ${columns.join(", ")})`);
    }
  }
  return rows;
}

export function num(row: Record<string, string>, key: string): number {
  const v = Number(row[key]);
  if (!Number.isFinite(v)) {
    throw new Error(`non-numeric value '${row[key]}' in column '${key}'`);
  }
  return v;
}

export const TRAJECTORY_COLUMNS = [
  "t",
  "source",
  "obs_name",
  "value_re",
  "value_im",
  "loss_t",
  "loss_t_per_site",
  "window_index",
];

export const LOSS_COLUMNS = ["iter", "loss", "loss_per_site"];

export const CG_COLUMNS = ["m", "t", "delta"];
