/**
 * CSV parsing and schema validation for the benchmark harness outputs.
 *
 * The harness writes plain comma-separated files; only the strategy column
 * ever needs quoting (it contains commas), so a small quote-aware splitter
 * is enough. Any structural surprise raises SchemaMismatch.
 */

export class SchemaMismatch extends Error {}

export interface RecoveryRow {
  strategy: string;
  failure_fraction: number;
  repetition: number;
  pct_blocks_recovered: number;
}

export interface ComparisonRow {
  mode: string;
  depth: number;
  fraction: number;
  repetition: number;
  total_time_ticks: number;
  avg_peer_time_ticks: number;
  total_blocks_downloaded: number;
  avg_blocks_per_peer: number;
}

export const RECOVERY_COLUMNS = [
  "strategy",
  "failure_fraction",
  "repetition",
  "pct_blocks_recovered",
];

export const COMPARISON_COLUMNS = [
  "mode",
  "depth",
  "fraction",
  "repetition",
  "total_time_ticks",
  "avg_peer_time_ticks",
  "total_blocks_downloaded",
  "avg_blocks_per_peer",
];

export function splitCsvLine(line: string): string[] {
  const fields: string[] = [];
  let current = "";
  let quoted = false;
  for (let i = 0; i < line.length; i++) {
    const ch = line[i];
    if (quoted) {
      if (ch === '"') {
        if (line[i + 1] === '"') {
          current += '"';
          i++;
        } else {
          quoted = false;
        }
      } else {
        current += ch;
      }
    } else if (ch === '"') {
      quoted = true;
    } else if (ch === ",") {
      fields.push(current);
      current = "";
    } else {
      current += ch;
    }
  }
  fields.push(current);
  return fields;
}

export function parseCsv(text: string): { header: string[]; rows: string[][] } {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaMismatch("empty CSV");
  }
  const header = splitCsvLine(lines[0]);
  const rows = lines.slice(1).map(splitCsvLine);
  for (const row of rows) {
    if (row.length !== header.length) {
      throw new SchemaMismatch(
        `row has ${row.length} fields, header has ${header.length}`,
      );
    }
  }
  return { header, rows };
}

function requireColumns(header: string[], wanted: string[], label: string) {
  for (const col of wanted) {
    if (!header.includes(col)) {
      throw new SchemaMismatch(`${label}: missing column ${col}`);
    }
  }
}

function num(value: string, column: string): number {
  const x = Number(value);
  if (!Number.isFinite(x)) {
    throw new SchemaMismatch(`non-numeric value ${JSON.stringify(value)} in ${column}`);
  }
  return x;
}

export function parseRecoveryCsv(text: string): RecoveryRow[] {
  const { header, rows } = parseCsv(text);
  requireColumns(header, RECOVERY_COLUMNS, "recovery sweep");
  if (rows.length === 0) {
    throw new SchemaMismatch("recovery sweep: no data rows");
  }
  const at = (row: string[], col: string) => row[header.indexOf(col)];
  return rows.map((row) => ({
    strategy: at(row, "strategy"),
    failure_fraction: num(at(row, "failure_fraction"), "failure_fraction"),
    repetition: num(at(row, "repetition"), "repetition"),
    pct_blocks_recovered: num(at(row, "pct_blocks_recovered"), "pct_blocks_recovered"),
  }));
}

export function parseComparisonCsv(text: string): ComparisonRow[] {
  const { header, rows } = parseCsv(text);
  requireColumns(header, COMPARISON_COLUMNS, "repair comparison");
  if (rows.length === 0) {
    throw new SchemaMismatch("repair comparison: no data rows");
  }
  const at = (row: string[], col: string) => row[header.indexOf(col)];
  return rows.map((row) => ({
    mode: at(row, "mode"),
    depth: num(at(row, "depth"), "depth"),
    fraction: num(at(row, "fraction"), "fraction"),
    repetition: num(at(row, "repetition"), "repetition"),
    total_time_ticks: num(at(row, "total_time_ticks"), "total_time_ticks"),
    avg_peer_time_ticks: num(at(row, "avg_peer_time_ticks"), "avg_peer_time_ticks"),
    total_blocks_downloaded: num(
      at(row, "total_blocks_downloaded"),
      "total_blocks_downloaded",
    ),
    avg_blocks_per_peer: num(at(row, "avg_blocks_per_peer"), "avg_blocks_per_peer"),
  }));
}

/** Identify which harness file a CSV is, by its header. */
export function sniffKind(text: string): "recovery" | "comparison" {
  const { header } = parseCsv(text);
  if (RECOVERY_COLUMNS.every((c) => header.includes(c))) {
    return "recovery";
  }
  if (COMPARISON_COLUMNS.every((c) => header.includes(c))) {
    return "comparison";
  }
  throw new SchemaMismatch(`unknown header: ${header.join(",")}`);
}
