/** The four figure kinds, each a pure function of its input table.
 *
 * convergence:  trace.csv -> iteration curve (log y), preferring abs_error
 * heatmap:      dense conditional-map table -> colored grid, row order kept
 * model-select: model_select.csv -> distance vs theta, one curve per K,
 *               with a marker at each curve's minimum
 * dist-matrix:  dist_matrix.csv -> instance-by-instance heatmap
 */

import { column, denseMatrix, hasColumn, readTable, Table } from "./table.js";
import { linearScale, logScale } from "./scale.js";
import { DEFAULT_FRAME, el, Frame, LINE_COLORS, rampColor, svgDocument, textEl, xAxis, yAxis } from "./svg.js";

export type PlotKind = "convergence" | "heatmap" | "model-select" | "dist-matrix";

export interface PlotSpec {
  kind: PlotKind;
  input: string;
}

export function render(spec: PlotSpec): string {
  const table = readTable(spec.input);
  switch (spec.kind) {
    case "convergence":
      return renderConvergence(table);
    case "heatmap":
      return renderHeatmap(table, "target state", "conditioning state");
    case "model-select":
      return renderModelSelect(table);
    case "dist-matrix":
      return renderHeatmap(table, "instance j", "instance i");
    default:
      throw new Error(`unknown plot kind '${spec.kind as string}'`);
  }
}

function renderConvergence(table: Table): string {
  const frame = DEFAULT_FRAME;
  const ks = column(table, "k");
  const yName = hasColumn(table, "abs_error") ? "abs_error" : "distance_estimate";
  const ys = column(table, yName);
  const positive = ys.filter((v) => v > 0);
  const yLo = positive.length ? Math.min(...positive) : 1e-3;
  const yHi = positive.length ? Math.max(...positive) : 1;
  const x = linearScale([Math.min(...ks), Math.max(...ks)], [frame.left, frame.width - frame.right]);
  const y = logScale([yLo, yHi], [frame.height - frame.bottom, frame.top]);
  const points = ks.map((k, i) => `${x(k).toFixed(2)},${y(ys[i]).toFixed(2)}`).join(" ");
  const body = [
    xAxis(frame, x, "iteration k"),
    yAxis(frame, y, yName),
    el("polyline", { points, fill: "none", stroke: LINE_COLORS[0], "stroke-width": 1.5 }),
  ].join("\n");
  return svgDocument(frame, body);
}

function renderHeatmap(table: Table, xLabel: string, yLabel: string): string {
  const { rowLabels, colLabels, values } = denseMatrix(table);
  const frame: Frame = { ...DEFAULT_FRAME, bottom: 60 };
  const plotW = frame.width - frame.left - frame.right;
  const plotH = frame.height - frame.top - frame.bottom;
  const cellW = plotW / colLabels.length;
  const cellH = plotH / rowLabels.length;
  const flat = values.flat();
  const vLo = Math.min(...flat);
  const vHi = Math.max(...flat);
  const span = vHi - vLo || 1;
  const parts: string[] = [];
  values.forEach((row, i) => {
    row.forEach((value, j) => {
      parts.push(el("rect", {
        x: frame.left + j * cellW,
        y: frame.top + i * cellH,
        width: cellW,
        height: cellH,
        fill: rampColor((value - vLo) / span),
        class: "cell",
        "data-row": rowLabels[i],
        "data-col": colLabels[j],
      }));
    });
  });
  // tick labels follow the stored orders exactly
  rowLabels.forEach((label, i) => {
    parts.push(textEl(frame.left - 8, frame.top + (i + 0.5) * cellH + 4, label,
      { "text-anchor": "end", class: "row-tick" }));
  });
  colLabels.forEach((label, j) => {
    parts.push(textEl(frame.left + (j + 0.5) * cellW, frame.height - frame.bottom + 16, label,
      { "text-anchor": "middle", class: "col-tick" }));
  });
  parts.push(textEl((frame.left + frame.width - frame.right) / 2, frame.height - 12, xLabel,
    { "text-anchor": "middle", "font-size": 13, class: "axis-label-x" }));
  const cy = (frame.top + frame.height - frame.bottom) / 2;
  parts.push(textEl(16, cy, yLabel, {
    "text-anchor": "middle", "font-size": 13, class: "axis-label-y",
    transform: `rotate(-90 16 ${Math.round(cy)})`,
  }));
  parts.push(legend(frame, vLo, vHi));
  return svgDocument(frame, parts.join("\n"));
}

function legend(frame: Frame, vLo: number, vHi: number): string {
  const steps = 24;
  const w = 8;
  const h = (frame.height - frame.top - frame.bottom) / steps;
  const x = frame.width - frame.right + 8;
  const parts: string[] = [];
  for (let i = 0; i < steps; i++) {
    parts.push(el("rect", {
      x, y: frame.top + (steps - 1 - i) * h, width: w, height: h + 0.5,
      fill: rampColor(i / (steps - 1)),
    }));
  }
  parts.push(textEl(x + w + 2, frame.top + 8, vHi.toPrecision(3)));
  parts.push(textEl(x + w + 2, frame.height - frame.bottom, vLo.toPrecision(3)));
  return parts.join("\n");
}

function renderModelSelect(table: Table): string {
  const frame = DEFAULT_FRAME;
  const thetas = column(table, "theta");
  const ks = column(table, "K");
  const dists = column(table, "distance");
  const kLevels = [...new Set(ks)].sort((a, b) => a - b);
  const x = linearScale([Math.min(...thetas), Math.max(...thetas)], [frame.left, frame.width - frame.right]);
  const y = linearScale([0, Math.max(...dists) * 1.05], [frame.height - frame.bottom, frame.top]);
  const parts = [xAxis(frame, x, "theta"), yAxis(frame, y, "distance")];
  kLevels.forEach((kLevel, idx) => {
    const pts: Array<[number, number]> = [];
    thetas.forEach((theta, i) => {
      if (ks[i] === kLevel) pts.push([theta, dists[i]]);
    });
    pts.sort((a, b) => a[0] - b[0]);
    const color = LINE_COLORS[idx % LINE_COLORS.length];
    const points = pts.map(([t, d]) => `${x(t).toFixed(2)},${y(d).toFixed(2)}`).join(" ");
    parts.push(el("polyline", { points, fill: "none", stroke: color, "stroke-width": 1.5 }));
    const best = pts.reduce((acc, p) => (p[1] < acc[1] ? p : acc));
    parts.push(el("circle", {
      cx: x(best[0]), cy: y(best[1]), r: 5, fill: "none", stroke: color,
      "stroke-width": 2, class: "min-marker", "data-k": kLevel,
    }));
    parts.push(textEl(frame.width - frame.right - 6, frame.top + 14 + 16 * idx, `K=${kLevel}`,
      { "text-anchor": "end", fill: color }));
  });
  return svgDocument(frame, parts.join("\n"));
}
