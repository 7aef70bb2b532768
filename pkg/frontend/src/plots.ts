/** The two figure families rendered from the harness CSVs. */

import { ComparisonRow, RecoveryRow, parseComparisonCsv, parseRecoveryCsv } from "./schema.js";
import { SeriesPoint, groupSeries } from "./stats.js";
import { ChartStyle, DEFAULT_STYLE, renderChart } from "./svg.js";

export interface Figure {
  name: string;
  svg: string;
}

export function recoverySeries(rows: RecoveryRow[]): Map<string, SeriesPoint[]> {
  return groupSeries(
    rows,
    (r) => r.strategy,
    (r) => r.failure_fraction,
    (r) => r.pct_blocks_recovered,
  );
}

/** One figure: mean recovered percentage per strategy with std bands. */
export function plotRecovery(csvText: string, style: ChartStyle = DEFAULT_STYLE): Figure[] {
  const rows = parseRecoveryCsv(csvText);
  const series = recoverySeries(rows);
  const svg = renderChart(
    "Recovered blocks vs peer failure",
    "peer failure fraction",
    "mean % of blocks recovered",
    series,
    style,
  );
  return [{ name: "recovery.svg", svg }];
}

export const COMPARISON_METRICS: Array<{
  column: keyof ComparisonRow;
  slug: string;
  title: string;
  yLabel: string;
}> = [
  {
    column: "total_time_ticks",
    slug: "total_time",
    title: "Total repair time",
    yLabel: "simulated ticks",
  },
  {
    column: "avg_peer_time_ticks",
    slug: "peer_time",
    title: "Repair time per peer",
    yLabel: "simulated ticks",
  },
  {
    column: "total_blocks_downloaded",
    slug: "total_blocks",
    title: "Total blocks downloaded",
    yLabel: "blocks",
  },
  {
    column: "avg_blocks_per_peer",
    slug: "peer_blocks",
    title: "Blocks downloaded per peer",
    yLabel: "blocks",
  },
];

export function comparisonSeries(
  rows: ComparisonRow[],
  depth: number,
  column: keyof ComparisonRow,
): Map<string, SeriesPoint[]> {
  const subset = rows.filter((r) => r.depth === depth);
  return groupSeries(
    subset,
    (r) => r.mode,
    (r) => r.fraction,
    (r) => Number(r[column]),
  );
}

/** Four panels (time, per-peer time, blocks, per-peer blocks) per depth. */
export function plotRepairComparison(
  csvText: string,
  style: ChartStyle = DEFAULT_STYLE,
): Figure[] {
  const rows = parseComparisonCsv(csvText);
  const depths = [...new Set(rows.map((r) => r.depth))].sort((a, b) => a - b);
  const figures: Figure[] = [];
  for (const depth of depths) {
    for (const metric of COMPARISON_METRICS) {
      const series = comparisonSeries(rows, depth, metric.column);
      const svg = renderChart(
        `${metric.title} (depth ${depth})`,
        "peer failure fraction",
        metric.yLabel,
        series,
        style,
      );
      figures.push({ name: `comparison_depth${depth}_${metric.slug}.svg`, svg });
    }
  }
  return figures;
}
