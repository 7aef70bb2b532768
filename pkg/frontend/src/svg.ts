/**
 * Minimal deterministic SVG line charts: mean lines with +-1 std bands.
 * Pure string building; the same input always yields the same bytes.
 */

import { SeriesPoint } from "./stats.js";

export interface ChartStyle {
  width: number;
  height: number;
  margin: { top: number; right: number; bottom: number; left: number };
  colors: string[];
}

export const DEFAULT_STYLE: ChartStyle = {
  width: 720,
  height: 480,
  margin: { top: 40, right: 24, bottom: 56, left: 72 },
  colors: ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"],
};

const fmt = (x: number) => {
  const s = x.toFixed(3);
  return s.replace(/\.?0+$/, "") || "0";
};

function niceTicks(lo: number, hi: number, count: number): number[] {
  if (hi === lo) {
    return [lo];
  }
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const candidates = [step, 2 * step, 5 * step, 10 * step];
  const chosen = candidates.find((s) => span / s <= count) ?? 10 * step;
  const ticks: number[] = [];
  for (let t = Math.ceil(lo / chosen) * chosen; t <= hi + 1e-12; t += chosen) {
    ticks.push(Number(t.toPrecision(12)));
  }
  return ticks;
}

export function renderChart(
  title: string,
  xLabel: string,
  yLabel: string,
  series: Map<string, SeriesPoint[]>,
  style: ChartStyle = DEFAULT_STYLE,
): string {
  const { width, height, margin, colors } = style;
  const plotW = width - margin.left - margin.right;
  const plotH = height - margin.top - margin.bottom;

  let xMin = Infinity;
  let xMax = -Infinity;
  let yMin = Infinity;
  let yMax = -Infinity;
  for (const points of series.values()) {
    for (const p of points) {
      xMin = Math.min(xMin, p.x);
      xMax = Math.max(xMax, p.x);
      yMin = Math.min(yMin, p.mean - p.std);
      yMax = Math.max(yMax, p.mean + p.std);
    }
  }
  if (xMax === xMin) {
    xMax = xMin + 1;
  }
  if (yMax === yMin) {
    yMax = yMin + 1;
  }
  const pad = (yMax - yMin) * 0.05;
  yMin -= pad;
  yMax += pad;

  const sx = (x: number) => margin.left + ((x - xMin) / (xMax - xMin)) * plotW;
  const sy = (y: number) => margin.top + (1 - (y - yMin) / (yMax - yMin)) * plotH;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`,
  );
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(
    `<text x="${width / 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">${title}</text>`,
  );

  // axes and ticks
  const axisColor = "#333";
  parts.push(
    `<line x1="${margin.left}" y1="${margin.top + plotH}" x2="${margin.left + plotW}" y2="${margin.top + plotH}" stroke="${axisColor}"/>`,
  );
  parts.push(
    `<line x1="${margin.left}" y1="${margin.top}" x2="${margin.left}" y2="${margin.top + plotH}" stroke="${axisColor}"/>`,
  );
  for (const t of niceTicks(xMin, xMax, 8)) {
    const X = sx(t);
    parts.push(
      `<line x1="${fmt(X)}" y1="${margin.top + plotH}" x2="${fmt(X)}" y2="${margin.top + plotH + 5}" stroke="${axisColor}"/>`,
    );
    parts.push(
      `<text x="${fmt(X)}" y="${margin.top + plotH + 20}" text-anchor="middle" font-family="sans-serif" font-size="11">${fmt(t)}</text>`,
    );
  }
  for (const t of niceTicks(yMin, yMax, 6)) {
    const Y = sy(t);
    parts.push(
      `<line x1="${margin.left - 5}" y1="${fmt(Y)}" x2="${margin.left}" y2="${fmt(Y)}" stroke="${axisColor}"/>`,
    );
    parts.push(
      `<text x="${margin.left - 9}" y="${fmt(Y + 4)}" text-anchor="end" font-family="sans-serif" font-size="11">${fmt(t)}</text>`,
    );
  }
  parts.push(
    `<text x="${margin.left + plotW / 2}" y="${height - 12}" text-anchor="middle" font-family="sans-serif" font-size="13">${xLabel}</text>`,
  );
  parts.push(
    `<text x="18" y="${margin.top + plotH / 2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 18 ${margin.top + plotH / 2})">${yLabel}</text>`,
  );

  // std bands first, then mean lines on top
  let idx = 0;
  for (const [, points] of series) {
    const color = colors[idx % colors.length];
    const upper = points.map((p) => `${fmt(sx(p.x))},${fmt(sy(p.mean + p.std))}`);
    const lower = [...points]
      .reverse()
      .map((p) => `${fmt(sx(p.x))},${fmt(sy(p.mean - p.std))}`);
    parts.push(
      `<polygon points="${[...upper, ...lower].join(" ")}" fill="${color}" opacity="0.15"/>`,
    );
    idx++;
  }
  idx = 0;
  for (const [label, points] of series) {
    const color = colors[idx % colors.length];
    const path = points
      .map((p, i) => `${i === 0 ? "M" : "L"}${fmt(sx(p.x))} ${fmt(sy(p.mean))}`)
      .join(" ");
    parts.push(`<path d="${path}" fill="none" stroke="${color}" stroke-width="2"/>`);
    for (const p of points) {
      parts.push(
        `<circle cx="${fmt(sx(p.x))}" cy="${fmt(sy(p.mean))}" r="3" fill="${color}"/>`,
      );
    }
    const legendY = margin.top + 8 + idx * 18;
    parts.push(
      `<rect x="${margin.left + plotW - 150}" y="${legendY - 9}" width="12" height="12" fill="${color}"/>`,
    );
    parts.push(
      `<text x="${margin.left + plotW - 132}" y="${legendY + 2}" font-family="sans-serif" font-size="12">${label}</text>`,
    );
    idx++;
  }
  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
