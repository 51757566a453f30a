import { mkdtempSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";
import { describe, expect, it } from "vitest";

import { render } from "../src/render.js";
import { readTable } from "../src/table.js";

const FIXTURES = join(__dirname, "fixtures");

describe("convergence", () => {
  it("renders the primary trace table with labeled axes", () => {
    const svg = render({ kind: "convergence", input: join(FIXTURES, "trace.csv") });
    expect(svg.startsWith("<svg")).toBe(true);
    expect(svg).toContain("iteration k");
    expect(svg).toContain("abs_error"); // error column present -> log error curve
    expect(svg).toContain("<polyline");
  });

  it("falls back to the distance column when no error column exists", () => {
    const dir = mkdtempSync(join(tmpdir(), "mcot-plots-"));
    const path = join(dir, "trace.csv");
    writeFileSync(path, "k,distance_estimate\n100,0.5\n200,0.25\n300,0.125\n");
    const svg = render({ kind: "convergence", input: path });
    expect(svg).toContain("distance_estimate");
  });

  it("names the missing column on malformed input", () => {
    const dir = mkdtempSync(join(tmpdir(), "mcot-plots-"));
    const path = join(dir, "bad.csv");
    writeFileSync(path, "iter,value\n1,0.5\n");
    expect(() => render({ kind: "convergence", input: path })).toThrow(/'k'/);
  });
});

describe("heatmap", () => {
  it("renders the conditional-map table with labeled axes", () => {
    const svg = render({ kind: "heatmap", input: join(FIXTURES, "lambda_x.csv") });
    expect(svg).toContain("conditioning state");
    expect(svg).toContain("target state");
    expect(svg).toContain('class="cell"');
  });

  it("keeps heatmap rows in table order", () => {
    const table = readTable(join(FIXTURES, "lambda_x.csv"));
    const svg = render({ kind: "heatmap", input: join(FIXTURES, "lambda_x.csv") });
    // row tick labels appear top-to-bottom in stored order
    const ticks = [...svg.matchAll(/class="row-tick"[^>]*>([^<]*)<\/text>/g)].map((m) => m[1]);
    const tickYs = [...svg.matchAll(/y="([0-9.]+)"[^>]*class="row-tick"/g)].map((m) => Number(m[1]));
    expect(ticks).toEqual(table.rows.map((row) => row[0]));
    const sorted = [...tickYs].sort((a, b) => a - b);
    expect(tickYs).toEqual(sorted);
    // cell rects carry the same order via data-row, first column block
    const cellRows = [...svg.matchAll(/data-row="([^"]*)" data-col="y0"/g)].map((m) => m[1]);
    expect(cellRows).toEqual(table.rows.map((row) => row[0]));
  });
});

describe("model-select", () => {
  it("draws one curve per K with a minimum marker", () => {
    const path = join(FIXTURES, "model_select.csv");
    const svg = render({ kind: "model-select", input: path });
    const table = readTable(path);
    const kCount = new Set(table.rows.map((row) => row[1])).size;
    expect((svg.match(/<polyline/g) ?? []).length).toBe(kCount);
    expect((svg.match(/class="min-marker"/g) ?? []).length).toBe(kCount);
    expect(svg).toContain("theta");
    expect(svg).toContain("distance");
  });
});

describe("dist-matrix", () => {
  it("renders the instance matrix with labeled axes", () => {
    const svg = render({ kind: "dist-matrix", input: join(FIXTURES, "dist_matrix.csv") });
    expect(svg).toContain("instance i");
    expect(svg).toContain("instance j");
    expect(svg).toContain('class="cell"');
  });
});

describe("purity", () => {
  it("identical tables give identical images", () => {
    const a = render({ kind: "heatmap", input: join(FIXTURES, "lambda_x.csv") });
    const b = render({ kind: "heatmap", input: join(FIXTURES, "lambda_x.csv") });
    expect(a).toBe(b);
  });
});
