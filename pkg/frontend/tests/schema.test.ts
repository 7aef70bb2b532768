import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import {
  SchemaMismatch,
  parseComparisonCsv,
  parseRecoveryCsv,
  sniffKind,
  splitCsvLine,
} from "../src/schema.js";

const fixture = (name: string) =>
  readFileSync(join(__dirname, "fixtures", name), "utf8");

describe("csv splitting", () => {
  it("handles quoted fields with commas", () => {
    expect(splitCsvLine('"AE(3,5,5)",0.3,1,97.5')).toEqual([
      "AE(3,5,5)",
      "0.3",
      "1",
      "97.5",
    ]);
  });

  it("handles escaped quotes", () => {
    expect(splitCsvLine('"a""b",2')).toEqual(['a"b', "2"]);
  });
});

describe("recovery csv", () => {
  it("parses the harness output", () => {
    const rows = parseRecoveryCsv(fixture("recovery_sweep.csv"));
    expect(rows.length).toBeGreaterThan(0);
    const strategies = new Set(rows.map((r) => r.strategy));
    expect(strategies).toEqual(new Set(["AE(3,5,5)", "R=3", "R=5", "R=7"]));
  });

  it("rejects an empty file", () => {
    expect(() => parseRecoveryCsv("")).toThrow(SchemaMismatch);
  });

  it("rejects a header-only file", () => {
    const header = "strategy,failure_fraction,repetition,pct_blocks_recovered\n";
    expect(() => parseRecoveryCsv(header)).toThrow(SchemaMismatch);
  });

  it("rejects a missing column", () => {
    const text = "strategy,repetition\nR=3,1\n";
    expect(() => parseRecoveryCsv(text)).toThrow(SchemaMismatch);
  });

  it("rejects non-numeric cells", () => {
    const text =
      "strategy,failure_fraction,repetition,pct_blocks_recovered\nR=3,zero,1,50\n";
    expect(() => parseRecoveryCsv(text)).toThrow(SchemaMismatch);
  });
});

describe("comparison csv", () => {
  it("parses the harness output", () => {
    const rows = parseComparisonCsv(fixture("repair_comparison.csv"));
    expect(new Set(rows.map((r) => r.mode))).toEqual(new Set(["single", "collab"]));
    expect(new Set(rows.map((r) => r.depth))).toEqual(new Set([5, 7, 10]));
  });

  it("rejects a csv without the mode column", () => {
    const rows = fixture("repair_comparison.csv")
      .split("\n")
      .map((line) => line.split(",").slice(1).join(","))
      .join("\n");
    expect(() => parseComparisonCsv(rows)).toThrow(SchemaMismatch);
  });
});

describe("sniffing", () => {
  it("identifies both harness files", () => {
    expect(sniffKind(fixture("recovery_sweep.csv"))).toBe("recovery");
    expect(sniffKind(fixture("repair_comparison.csv"))).toBe("comparison");
  });

  it("rejects unknown headers", () => {
    expect(() => sniffKind("a,b\n1,2\n")).toThrow(SchemaMismatch);
  });
});
