/** Grouped means and population standard deviations over raw rows. */

export interface SeriesPoint {
  x: number;
  mean: number;
  std: number;
  n: number;
}

export function mean(values: number[]): number {
  let total = 0;
  for (const v of values) total += v;
  return total / values.length;
}

export function pstdev(values: number[]): number {
  const m = mean(values);
  let total = 0;
  for (const v of values) total += (v - m) * (v - m);
  return Math.sqrt(total / values.length);
}

/** One series per key: points at each x with mean and std over repetitions. */
export function groupSeries<Row>(
  rows: Row[],
  keyOf: (row: Row) => string,
  xOf: (row: Row) => number,
  yOf: (row: Row) => number,
): Map<string, SeriesPoint[]> {
  const buckets = new Map<string, Map<number, number[]>>();
  for (const row of rows) {
    const key = keyOf(row);
    const x = xOf(row);
    if (!buckets.has(key)) buckets.set(key, new Map());
    const xs = buckets.get(key)!;
    if (!xs.has(x)) xs.set(x, []);
    xs.get(x)!.push(yOf(row));
  }
  const out = new Map<string, SeriesPoint[]>();
  for (const [key, xs] of [...buckets.entries()].sort()) {
    const points = [...xs.entries()]
      .sort((a, b) => a[0] - b[0])
      .map(([x, ys]) => ({ x, mean: mean(ys), std: pstdev(ys), n: ys.length }));
    out.set(key, points);
  }
  return out;
}
