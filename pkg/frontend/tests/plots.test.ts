import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import {
  COMPARISON_METRICS,
  comparisonSeries,
  plotRecovery,
  plotRepairComparison,
  recoverySeries,
} from "../src/plots.js";
import { parseComparisonCsv, parseRecoveryCsv, parseCsv } from "../src/schema.js";

const fixture = (name: string) =>
  readFileSync(join(__dirname, "fixtures", name), "utf8");

describe("recovery figure", () => {
  it("renders one figure with four series", () => {
    const figures = plotRecovery(fixture("recovery_sweep.csv"));
    expect(figures).toHaveLength(1);
    expect(figures[0].name).toBe("recovery.svg");
    for (const label of ["AE(3,5,5)", "R=3", "R=5", "R=7"]) {
      expect(figures[0].svg).toContain(`>${label}</text>`);
    }
    // four mean lines and four bands
    expect(figures[0].svg.match(/<path /g)).toHaveLength(4);
    expect(figures[0].svg.match(/<polygon /g)).toHaveLength(4);
  });

  it("is deterministic for the same input", () => {
    const a = plotRecovery(fixture("recovery_sweep.csv"))[0].svg;
    const b = plotRecovery(fixture("recovery_sweep.csv"))[0].svg;
    expect(a).toBe(b);
  });

  it("gives zero-width bands for a single repetition", () => {
    const text = [
      "strategy,failure_fraction,repetition,pct_blocks_recovered",
      "R=3,0.0,0,100.0",
      "R=3,0.5,0,87.5",
    ].join("\n");
    const series = recoverySeries(parseRecoveryCsv(text));
    for (const point of series.get("R=3")!) {
      expect(point.std).toBe(0);
    }
  });
});

describe("comparison figures", () => {
  it("renders four panels per depth (12 for depths 5/7/10)", () => {
    const figures = plotRepairComparison(fixture("repair_comparison.csv"));
    expect(figures).toHaveLength(12);
    const names = figures.map((f) => f.name);
    for (const depth of [5, 7, 10]) {
      for (const metric of ["total_time", "peer_time", "total_blocks", "peer_blocks"]) {
        expect(names).toContain(`comparison_depth${depth}_${metric}.svg`);
      }
    }
  });
});

describe("recomputed means match the harness summaries", () => {
  it("recovery summary to 1e-9 relative", () => {
    const rows = parseRecoveryCsv(fixture("recovery_sweep.csv"));
    const series = recoverySeries(rows);
    const summary = parseCsv(fixture("recovery_summary.csv"));
    const col = (name: string) => summary.header.indexOf(name);
    for (const row of summary.rows) {
      const strategy = row[col("strategy")];
      const fraction = Number(row[col("failure_fraction")]);
      const expected = Number(row[col("mean_pct")]);
      const point = series.get(strategy)!.find((p) => p.x === fraction)!;
      if (expected === 0) {
        expect(point.mean).toBe(0);
      } else {
        expect(Math.abs(point.mean - expected) / Math.abs(expected)).toBeLessThanOrEqual(1e-9);
      }
    }
  });

  it("comparison summary to 1e-9 relative", () => {
    const rows = parseComparisonCsv(fixture("repair_comparison.csv"));
    const summary = parseCsv(fixture("comparison_summary.csv"));
    const col = (name: string) => summary.header.indexOf(name);
    for (const row of summary.rows) {
      const mode = row[col("mode")];
      const depth = Number(row[col("depth")]);
      const fraction = Number(row[col("fraction")]);
      for (const metric of COMPARISON_METRICS) {
        const expected = Number(row[col(`mean_${String(metric.column)}`)]);
        const series = comparisonSeries(rows, depth, metric.column);
        const point = series.get(mode)!.find((p) => p.x === fraction)!;
        if (expected === 0) {
          expect(point.mean).toBe(0);
        } else {
          expect(Math.abs(point.mean - expected) / Math.abs(expected)).toBeLessThanOrEqual(1e-9);
        }
      }
    }
  });
});
