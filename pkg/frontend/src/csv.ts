/**
 * Reader for the diagnostics CSV contract.
 *
 * Expected header: study,preset,param,value,error,cpu_seconds
 * `param` carries the series key ("inv_h", "s", "N", "N@ell=<l>",
 * "error:sl" / "error:ml"); `value` is the x variable of the row.
 */

import * as fs from "fs";

export const EXPECTED_HEADER = ["study", "preset", "param", "value", "error", "cpu_seconds"];

export interface StudyRow {
  study: string;
  preset: string;
  param: string;
  value: number;
  error: number;
  cpuSeconds: number;
}

export class SchemaError extends Error {}

export function parseStudyCsv(text: string, source = "<csv>"): StudyRow[] {
  const lines = text.split(/\r?\n/).filter((l) => l.trim().length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${source}: file is empty`);
  }
  const header = lines[0].split(",").map((h) => h.trim());
  for (const col of EXPECTED_HEADER) {
    if (!header.includes(col)) {
      throw new SchemaError(
        `${source}: missing column "${col}" (header: ${header.join(",")})`
      );
    }
  }
  const idx = EXPECTED_HEADER.map((c) => header.indexOf(c));
  const rows: StudyRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const cols = lines[i].split(",");
    if (cols.length < header.length) {
      throw new SchemaError(`${source}: row ${i + 1} has ${cols.length} columns`);
    }
    const value = Number(cols[idx[3]]);
    const error = Number(cols[idx[4]]);
    const cpu = Number(cols[idx[5]]);
    if (!isFinite(value) || !isFinite(error) || !isFinite(cpu)) {
      throw new SchemaError(`${source}: row ${i + 1} has non-numeric data`);
    }
    rows.push({
      study: cols[idx[0]],
      preset: cols[idx[1]],
      param: cols[idx[2]],
      value,
      error,
      cpuSeconds: cpu,
    });
  }
  if (rows.length === 0) {
    throw new SchemaError(`${source}: no data rows`);
  }
  return rows;
}

export function readStudyCsv(path: string): StudyRow[] {
  if (!fs.existsSync(path)) {
    throw new SchemaError(`${path}: no such file`);
  }
  return parseStudyCsv(fs.readFileSync(path, "utf-8"), path);
}

/** Group rows by their param key, preserving first-seen order. */
export function groupByParam(rows: StudyRow[]): Map<string, StudyRow[]> {
  const groups = new Map<string, StudyRow[]>();
  for (const row of rows) {
    const bucket = groups.get(row.param);
    if (bucket) {
      bucket.push(row);
    } else {
      groups.set(row.param, [row]);
    }
  }
  return groups;
}
