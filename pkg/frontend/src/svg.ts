/** SVG string assembly: element builders, axes, a sequential color ramp. */

import { Scale, formatTick } from "./scale.js";

export function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function el(tag: string, attrs: Record<string, string | number>, body = ""): string {
  const parts = Object.entries(attrs)
    .map(([key, value]) => `${key}="${typeof value === "number" ? round(value) : escapeXml(value)}"`)
    .join(" ");
  return body === "" ? `<${tag} ${parts}/>` : `<${tag} ${parts}>${body}</${tag}>`;
}

export function textEl(x: number, y: number, body: string, attrs: Record<string, string | number> = {}): string {
  return el("text", { x, y, "font-family": "sans-serif", "font-size": 11, ...attrs }, escapeXml(body));
}

function round(value: number): string {
  return String(Math.round(value * 100) / 100);
}

export interface Frame {
  width: number;
  height: number;
  left: number;
  right: number;
  top: number;
  bottom: number;
}

export const DEFAULT_FRAME: Frame = { width: 640, height: 420, left: 70, right: 30, top: 30, bottom: 55 };

export function svgDocument(frame: Frame, body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${frame.width}" height="${frame.height}" ` +
    `viewBox="0 0 ${frame.width} ${frame.height}">\n` +
    el("rect", { x: 0, y: 0, width: frame.width, height: frame.height, fill: "white" }) +
    "\n" + body + "\n</svg>\n"
  );
}

/** Bottom axis with ticks and a centered axis label. */
export function xAxis(frame: Frame, scale: Scale, label: string): string {
  const y = frame.height - frame.bottom;
  const parts = [el("line", { x1: frame.left, y1: y, x2: frame.width - frame.right, y2: y, stroke: "black" })];
  for (const tick of scale.ticks) {
    const x = scale(tick);
    parts.push(el("line", { x1: x, y1: y, x2: x, y2: y + 5, stroke: "black" }));
    parts.push(textEl(x, y + 18, formatTick(tick), { "text-anchor": "middle" }));
  }
  parts.push(textEl((frame.left + frame.width - frame.right) / 2, frame.height - 12, label, {
    "text-anchor": "middle", "font-size": 13, class: "axis-label-x",
  }));
  return parts.join("\n");
}

/** Left axis with ticks and a rotated axis label. */
export function yAxis(frame: Frame, scale: Scale, label: string): string {
  const x = frame.left;
  const parts = [el("line", { x1: x, y1: frame.top, x2: x, y2: frame.height - frame.bottom, stroke: "black" })];
  for (const tick of scale.ticks) {
    const y = scale(tick);
    parts.push(el("line", { x1: x - 5, y1: y, x2: x, y2: y, stroke: "black" }));
    parts.push(textEl(x - 8, y + 4, formatTick(tick), { "text-anchor": "end" }));
  }
  const cy = (frame.top + frame.height - frame.bottom) / 2;
  parts.push(textEl(16, cy, label, {
    "text-anchor": "middle", "font-size": 13, class: "axis-label-y",
    transform: `rotate(-90 16 ${Math.round(cy)})`,
  }));
  return parts.join("\n");
}

/** Dark-blue to yellow sequential ramp over [0, 1]. */
export function rampColor(t: number): string {
  const s = Math.min(Math.max(t, 0), 1);
  const r = Math.round(40 + 215 * s);
  const g = Math.round(40 + 180 * s);
  const b = Math.round(120 - 80 * s);
  return `rgb(${r},${g},${b})`;
}

export const LINE_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
