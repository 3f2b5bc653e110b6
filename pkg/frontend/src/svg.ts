/**
 * Minimal deterministic SVG line charts: fixed canvas, no timestamps, no
 * randomness, so re-rendering the same data yields identical bytes.
 */

export interface Series {
  label: string;
  color: string;
  points: Array<[number, number]>;
  dash?: string;
  axis?: "left" | "right";
}

export interface ChartSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  rightYLabel?: string;
  logY?: boolean;
  series: Series[];
  /** explicit x tick positions (categorical sweeps); auto ticks otherwise */
  xTicks?: number[];
}

export const WIDTH = 720;
export const HEIGHT = 440;
const MARGIN = { top: 48, right: 76, bottom: 56, left: 84 };
const PLOT_W = WIDTH - MARGIN.left - MARGIN.right;
const PLOT_H = HEIGHT - MARGIN.top - MARGIN.bottom;

export class ChartError extends Error {}

function fmt(value: number): string {
  if (Number.isInteger(value)) return String(value);
  return value.toPrecision(4).replace(/\.?0+$/, "");
}

function niceTicks(min: number, max: number, count = 5): number[] {
  if (min === max) {
    return [min];
  }
  const span = max - min;
  const step0 = Math.pow(10, Math.floor(Math.log10(span / count)));
  const step = [1, 2, 5, 10].map((m) => m * step0).find((s) => span / s <= count) ?? step0 * 10;
  const ticks: number[] = [];
  for (let t = Math.ceil(min / step) * step; t <= max + step * 1e-9; t += step) {
    ticks.push(Number(t.toPrecision(12)));
  }
  return ticks;
}

function logTicks(min: number, max: number): number[] {
  // bracket the data with whole decades so the axis always shows 10^k marks
  const ticks: number[] = [];
  for (let e = Math.floor(Math.log10(min)); e <= Math.ceil(Math.log10(max)); e++) {
    ticks.push(Math.pow(10, e));
  }
  return ticks;
}

interface Scale {
  (value: number): number;
  ticks: number[];
}

function makeScale(values: number[], pixelFrom: number, pixelTo: number,
                   log: boolean, explicitTicks?: number[]): Scale {
  let min = Math.min(...values);
  let max = Math.max(...values);
  if (log) {
    if (min <= 0) throw new ChartError("log scale needs positive values");
    const ticks = explicitTicks ?? logTicks(min, max);
    min = Math.min(min, ticks[0]);
    max = Math.max(max, ticks[ticks.length - 1]);
    const lmin = Math.log10(min);
    const span = Math.log10(max) - lmin || 1;
    const scale = ((v: number) =>
      pixelFrom + ((Math.log10(v) - lmin) / span) * (pixelTo - pixelFrom)) as Scale;
    scale.ticks = ticks;
    return scale;
  }
  const ticks = explicitTicks ?? niceTicks(min, max);
  min = Math.min(min, ticks[0], 0 <= min ? 0 : min);
  max = Math.max(max, ticks[ticks.length - 1]);
  const span = max - min || 1;
  const scale = ((v: number) =>
    pixelFrom + ((v - min) / span) * (pixelTo - pixelFrom)) as Scale;
  scale.ticks = explicitTicks ?? niceTicks(min, max);
  return scale;
}

export function renderChart(spec: ChartSpec): string {
  const left = spec.series.filter((s) => (s.axis ?? "left") === "left");
  const right = spec.series.filter((s) => s.axis === "right");
  if (left.length === 0 || left.every((s) => s.points.length === 0)) {
    throw new ChartError(`no data to plot for '${spec.title}'`);
  }
  const xs = spec.series.flatMap((s) => s.points.map((p) => p[0]));
  const leftYs = left.flatMap((s) => s.points.map((p) => p[1]));
  const x = makeScale(xs, MARGIN.left, MARGIN.left + PLOT_W, false, spec.xTicks);
  const y = makeScale(leftYs, MARGIN.top + PLOT_H, MARGIN.top, spec.logY ?? false);
  const y2 = right.length
    ? makeScale(right.flatMap((s) => s.points.map((p) => p[1])).concat([0]),
                MARGIN.top + PLOT_H, MARGIN.top, false)
    : null;

  const out: string[] = [];
  out.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="sans-serif">`);
  out.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  out.push(`<text x="${WIDTH / 2}" y="24" text-anchor="middle" font-size="16">${spec.title}</text>`);

  // gridlines + y ticks (left axis)
  for (const t of y.ticks) {
    const py = y(t);
    out.push(`<line x1="${MARGIN.left}" y1="${fmt(py)}" x2="${MARGIN.left + PLOT_W}" y2="${fmt(py)}" stroke="#dddddd"/>`);
    out.push(`<text x="${MARGIN.left - 8}" y="${fmt(py + 4)}" text-anchor="end" font-size="11">${fmt(t)}</text>`);
  }
  for (const t of x.ticks) {
    const px = x(t);
    out.push(`<line x1="${fmt(px)}" y1="${MARGIN.top + PLOT_H}" x2="${fmt(px)}" y2="${MARGIN.top + PLOT_H + 5}" stroke="#333333"/>`);
    out.push(`<text x="${fmt(px)}" y="${MARGIN.top + PLOT_H + 20}" text-anchor="middle" font-size="11">${fmt(t)}</text>`);
  }
  if (y2) {
    for (const t of y2.ticks) {
      out.push(`<text x="${MARGIN.left + PLOT_W + 8}" y="${fmt(y2(t) + 4)}" text-anchor="start" font-size="11">${fmt(t)}</text>`);
    }
  }

  // axes
  out.push(`<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${MARGIN.top + PLOT_H}" stroke="#333333"/>`);
  out.push(`<line x1="${MARGIN.left}" y1="${MARGIN.top + PLOT_H}" x2="${MARGIN.left + PLOT_W}" y2="${MARGIN.top + PLOT_H}" stroke="#333333"/>`);
  out.push(`<text x="${WIDTH / 2}" y="${HEIGHT - 14}" text-anchor="middle" font-size="13">${spec.xLabel}</text>`);
  out.push(`<text x="20" y="${MARGIN.top + PLOT_H / 2}" text-anchor="middle" font-size="13" transform="rotate(-90 20 ${MARGIN.top + PLOT_H / 2})">${spec.yLabel}${spec.logY ? " (log)" : ""}</text>`);
  if (y2 && spec.rightYLabel) {
    const cx = WIDTH - 18;
    out.push(`<line x1="${MARGIN.left + PLOT_W}" y1="${MARGIN.top}" x2="${MARGIN.left + PLOT_W}" y2="${MARGIN.top + PLOT_H}" stroke="#333333"/>`);
    out.push(`<text x="${cx}" y="${MARGIN.top + PLOT_H / 2}" text-anchor="middle" font-size="13" transform="rotate(90 ${cx} ${MARGIN.top + PLOT_H / 2})">${spec.rightYLabel}</text>`);
  }

  // series
  for (const s of spec.series) {
    const scaleY = s.axis === "right" ? y2! : y;
    const pts = [...s.points].sort((a, b) => a[0] - b[0]);
    const path = pts.map((p) => `${fmt(x(p[0]))},${fmt(scaleY(p[1]))}`).join(" ");
    const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : "";
    out.push(`<polyline points="${path}" fill="none" stroke="${s.color}" stroke-width="2"${dash}/>`);
    for (const p of pts) {
      out.push(`<circle cx="${fmt(x(p[0]))}" cy="${fmt(scaleY(p[1]))}" r="3" fill="${s.color}"/>`);
    }
  }

  // legend
  spec.series.forEach((s, i) => {
    const ly = MARGIN.top + 6 + i * 18;
    const lx = MARGIN.left + 12;
    out.push(`<line x1="${lx}" y1="${ly}" x2="${lx + 22}" y2="${ly}" stroke="${s.color}" stroke-width="2"${s.dash ? ` stroke-dasharray="${s.dash}"` : ""}/>`);
    out.push(`<text x="${lx + 28}" y="${ly + 4}" font-size="12">${s.label}</text>`);
  });

  out.push("</svg>");
  return out.join("\n") + "\n";
}
