/**
 * Figure construction: turns study CSV rows into plot-ready series with
 * their least-squares rate fits.  Pure data, no drawing.
 */

import { StudyRow, groupByParam, SchemaError } from "./csv";
import { RateFit, fitRate } from "./fit";

export type FigureKind =
  | "fe"
  | "truncation-overlay"
  | "sl-overlay"
  | "level-grid"
  | "cost-compare";

export const FIGURE_KINDS: FigureKind[] = [
  "fe",
  "truncation-overlay",
  "sl-overlay",
  "level-grid",
  "cost-compare",
];

export interface Series {
  name: string;
  /** true data coordinates (positive; plotted on log scales) */
  x: number[];
  y: number[];
  fit: RateFit;
  /** legend label, e.g. "interp error: O(N^-1.52)" */
  label: string;
  /** overlays place series on independent rank-aligned x axes */
  axis: "bottom" | "top";
}

export interface FigureData {
  kind: FigureKind;
  title: string;
  xLabel: string;
  topLabel?: string;
  yLabel: string;
  /** log-log except rank-aligned overlays, which are rank vs log y */
  rankAligned: boolean;
  series: Series[];
  /** reference-slope triangle gradients to draw */
  triangles: number[];
}

function seriesFrom(
  rows: StudyRow[],
  name: string,
  label: (fit: RateFit) => string,
  axis: "bottom" | "top" = "bottom"
): Series {
  const x = rows.map((r) => r.value);
  const y = rows.map((r) => r.error);
  const fit = fitRate(x, y);
  return { name, x, y, fit, label: label(fit), axis };
}

function single(rows: StudyRow[], source: string, param: string): StudyRow[] {
  const groups = groupByParam(rows);
  const got = groups.get(param);
  if (!got) {
    throw new SchemaError(
      `${source}: expected rows with param "${param}", found ${[...groups.keys()].join(", ")}`
    );
  }
  return got;
}

function costSeries(rows: StudyRow[], source: string, key: string, name: string): Series {
  const got = single(rows, source, key);
  const x = got.map((r) => r.error);
  const y = got.map((r) => r.cpuSeconds);
  const fit = fitRate(x, y);
  return {
    name,
    x,
    y,
    fit,
    label: `${name}: O(eps^-${fit.rate.toFixed(2)})`,
    axis: "bottom",
  };
}

export function buildFigure(
  kind: FigureKind,
  inputs: { rows: StudyRow[]; source: string }[]
): FigureData {
  const need = (n: number) => {
    if (inputs.length !== n) {
      throw new SchemaError(`kind "${kind}" needs ${n} input CSV(s), got ${inputs.length}`);
    }
  };
  switch (kind) {
    case "fe": {
      need(1);
      const rows = single(inputs[0].rows, inputs[0].source, "inv_h");
      const preset = inputs[0].rows[0].preset;
      return {
        kind,
        title: `FE error (${preset})`,
        xLabel: "1/h",
        yLabel: "L2 error",
        rankAligned: false,
        series: [seriesFrom(rows, "fe", (f) => `FE error: O(h^${f.rate.toFixed(2)})`)],
        triangles: [2],
      };
    }
    case "truncation-overlay": {
      need(2);
      const trunc = single(inputs[0].rows, inputs[0].source, "s");
      const fe = single(inputs[1].rows, inputs[1].source, "inv_h");
      return {
        kind,
        title: `Dimension truncation vs FE error (${inputs[0].rows[0].preset})`,
        xLabel: "s",
        topLabel: "1/h",
        yLabel: "L2 error",
        rankAligned: true,
        series: [
          seriesFrom(trunc, "truncation", (f) => `truncation: O(s^-${f.rate.toFixed(2)})`),
          seriesFrom(fe, "fe", (f) => `FE: O(h^${f.rate.toFixed(2)})`, "top"),
        ],
        triangles: [],
      };
    }
    case "sl-overlay": {
      need(2);
      const sl = single(inputs[0].rows, inputs[0].source, "N");
      const fe = single(inputs[1].rows, inputs[1].source, "inv_h");
      return {
        kind,
        title: `Single-level interpolation vs FE error (${inputs[0].rows[0].preset})`,
        xLabel: "N",
        topLabel: "1/h",
        yLabel: "L2 error",
        rankAligned: true,
        series: [
          seriesFrom(sl, "interpolation", (f) => `interp: O(N^-${f.rate.toFixed(2)})`),
          seriesFrom(fe, "fe", (f) => `FE: O(h^${f.rate.toFixed(2)})`, "top"),
        ],
        triangles: [],
      };
    }
    case "level-grid": {
      need(1);
      const groups = groupByParam(inputs[0].rows);
      const series: Series[] = [];
      for (const [param, rows] of groups) {
        const match = /^N@ell=(\d+)$/.exec(param);
        if (!match) {
          throw new SchemaError(
            `${inputs[0].source}: unexpected param "${param}" for level-grid`
          );
        }
        series.push(
          seriesFrom(rows, `ell=${match[1]}`, (f) => `l=${match[1]}: O(N^-${f.rate.toFixed(2)})`)
        );
      }
      if (series.length === 0) {
        throw new SchemaError(`${inputs[0].source}: no level series found`);
      }
      return {
        kind,
        title: `Interpolation error of FE level differences (${inputs[0].rows[0].preset})`,
        xLabel: "N",
        yLabel: "L2 error",
        rankAligned: false,
        series,
        triangles: [1],
      };
    }
    case "cost-compare": {
      need(1);
      return {
        kind,
        title: `Construction cost vs error (${inputs[0].rows[0].preset})`,
        xLabel: "estimated error",
        yLabel: "CPU seconds",
        rankAligned: false,
        series: [
          costSeries(inputs[0].rows, inputs[0].source, "error:sl", "single-level"),
          costSeries(inputs[0].rows, inputs[0].source, "error:ml", "multilevel"),
        ],
        triangles: [1, 2],
      };
    }
    default:
      throw new SchemaError(`unknown figure kind "${kind}"`);
  }
}

/** Deterministic legend sidecar: the data and fits behind the drawn figure. */
export function legendDump(fig: FigureData, inputs: string[]): string {
  const payload = {
    kind: fig.kind,
    title: fig.title,
    inputs,
    series: fig.series.map((s) => ({
      name: s.name,
      label: s.label,
      n: s.fit.n,
      rate: s.fit.rate,
      intercept: s.fit.intercept,
      x: s.x,
      y: s.y,
    })),
    triangles: fig.triangles,
  };
  return JSON.stringify(payload, null, 2) + "\n";
}
