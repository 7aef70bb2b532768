#!/usr/bin/env node
/**
 * entstore-plots <csv...> --out <dir> [--format svg]
 *
 * Input kind is sniffed from the header: the recovery sweep yields one
 * figure, the repair comparison yields four panels per depth. Inputs are
 * never modified; regenerating from the same CSV gives identical bytes.
 */

import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { plotRecovery, plotRepairComparison } from "./plots.js";
import { SchemaMismatch, sniffKind } from "./schema.js";

function main(argv: string[]): number {
  const files: string[] = [];
  let outDir = "plots-out";
  let format = "svg";
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--out") {
      outDir = argv[++i];
    } else if (arg === "--format") {
      format = argv[++i];
    } else if (arg.startsWith("--")) {
      console.error(`error=unknown flag ${arg}`);
      return 2;
    } else {
      files.push(arg);
    }
  }
  if (files.length === 0) {
    console.error("error=no input CSVs given");
    return 2;
  }
  if (format !== "svg") {
    console.error(`error=unsupported format ${format}; this build emits svg`);
    return 2;
  }
  mkdirSync(outDir, { recursive: true });
  let count = 0;
  for (const file of files) {
    const text = readFileSync(file, "utf8");
    try {
      const kind = sniffKind(text);
      const figures = kind === "recovery" ? plotRecovery(text) : plotRepairComparison(text);
      for (const fig of figures) {
        const path = join(outDir, fig.name);
        writeFileSync(path, fig.svg);
        console.log(`figure=${path}`);
        count++;
      }
    } catch (err) {
      if (err instanceof SchemaMismatch) {
        console.error(`error=schema mismatch in ${file}: ${err.message}`);
        return 3;
      }
      throw err;
    }
  }
  console.log(`figures=${count}`);
  return 0;
}

process.exit(main(process.argv.slice(2)));
