/** Minimal linear/log scales with round tick positions. */

export interface Scale {
  (value: number): number;
  ticks: number[];
}

export function linearScale(domain: [number, number], range: [number, number], tickCount = 6): Scale {
  let [d0, d1] = domain;
  if (d0 === d1) {
    d0 -= 1;
    d1 += 1;
  }
  const [r0, r1] = range;
  const fn = ((value: number) => r0 + ((value - d0) / (d1 - d0)) * (r1 - r0)) as Scale;
  fn.ticks = linearTicks(d0, d1, tickCount);
  return fn;
}

export function logScale(domain: [number, number], range: [number, number]): Scale {
  const lo = Math.max(domain[0], 1e-300);
  const hi = Math.max(domain[1], lo * 10);
  const [r0, r1] = range;
  const l0 = Math.log10(lo);
  const l1 = Math.log10(hi);
  const fn = ((value: number) =>
    r0 + ((Math.log10(Math.max(value, 1e-300)) - l0) / (l1 - l0)) * (r1 - r0)) as Scale;
  const ticks: number[] = [];
  for (let p = Math.ceil(l0); p <= Math.floor(l1); p++) {
    ticks.push(Math.pow(10, p));
  }
  fn.ticks = ticks.length >= 2 ? ticks : [lo, hi];
  return fn;
}

function linearTicks(lo: number, hi: number, count: number): number[] {
  const span = hi - lo;
  const step = niceStep(span / Math.max(count - 1, 1));
  const start = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= hi + step * 1e-9; v += step) {
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

function niceStep(raw: number): number {
  const power = Math.pow(10, Math.floor(Math.log10(raw)));
  const unit = raw / power;
  if (unit <= 1) return power;
  if (unit <= 2) return 2 * power;
  if (unit <= 5) return 5 * power;
  return 10 * power;
}

export function formatTick(value: number): string {
  if (value === 0) return "0";
  const abs = Math.abs(value);
  if (abs >= 1e4 || abs < 1e-3) return value.toExponential(0);
  return String(Number(value.toPrecision(6)));
}
