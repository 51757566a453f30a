/** Reading the solver's headered comma-separated tables. */

import { readFileSync } from "fs";

export interface Table {
  header: string[];
  rows: string[][];
}

export function readTable(path: string): Table {
  const text = readFileSync(path, "utf8");
  const lines = text.split("\n").filter((line) => line.trim().length > 0);
  if (lines.length < 2) {
    throw new Error(`${path}: table needs a header row and at least one data row`);
  }
  const header = lines[0].split(",");
  const rows = lines.slice(1).map((line) => line.split(","));
  for (const row of rows) {
    if (row.length !== header.length) {
      throw new Error(`${path}: row has ${row.length} fields, header has ${header.length}`);
    }
  }
  return { header, rows };
}

/** Numeric column by name; errors name the missing column. */
export function column(table: Table, name: string): number[] {
  const idx = table.header.indexOf(name);
  if (idx < 0) {
    throw new Error(`missing column '${name}' (have: ${table.header.join(", ")})`);
  }
  return table.rows.map((row) => Number(row[idx]));
}

export function hasColumn(table: Table, name: string): boolean {
  return table.header.includes(name);
}

/**
 * A dense matrix table: first column holds row labels, remaining columns
 * hold values.  Row order is preserved exactly as stored.
 */
export function denseMatrix(table: Table): {
  rowLabels: string[];
  colLabels: string[];
  values: number[][];
} {
  if (table.header.length < 2) {
    throw new Error("dense table needs a label column and at least one value column");
  }
  const rowLabels = table.rows.map((row) => row[0]);
  const colLabels = table.header.slice(1);
  const values = table.rows.map((row) => row.slice(1).map(Number));
  return { rowLabels, colLabels, values };
}
