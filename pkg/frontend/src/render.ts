/**
 * Canvas renderer: log-log axes, markers, fitted dashed lines, legend box,
 * and reference-slope triangles, written out as PNG.
 */

import { createCanvas, SKRSContext2D } from "@napi-rs/canvas";
import * as fs from "fs";
import * as path from "path";

import { FigureData, Series } from "./scene";

const W = 760;
const H = 560;
const MARGIN = { left: 78, right: 24, top: 56, bottom: 64 };

const COLORS = ["#3455db", "#d62728", "#2ca02c", "#9467bd", "#e8850c", "#17becf"];
const MARKERS = ["circle", "triangle", "square", "diamond"] as const;

interface Scale {
  (v: number): number;
}

function log10(v: number): number {
  return Math.log(v) / Math.LN10;
}

function niceLogTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.floor(log10(lo)); e <= Math.ceil(log10(hi)); e++) {
    const t = Math.pow(10, e);
    if (t >= lo / 1.0001 && t <= hi * 1.0001) ticks.push(t);
  }
  if (ticks.length < 2) {
    ticks.length = 0;
    for (let e = Math.floor(Math.log2(lo)); e <= Math.ceil(Math.log2(hi)); e++) {
      const t = Math.pow(2, e);
      if (t >= lo / 1.0001 && t <= hi * 1.0001) ticks.push(t);
    }
  }
  return ticks;
}

function fmtTick(v: number): string {
  if (v >= 1 && v < 100000 && Number.isInteger(v)) return String(v);
  const e = Math.round(log10(v));
  if (Math.abs(v - Math.pow(10, e)) / v < 1e-9) return `1e${e}`;
  return v.toExponential(1);
}

function drawMarker(
  ctx: SKRSContext2D,
  shape: (typeof MARKERS)[number],
  x: number,
  y: number,
  r: number
) {
  ctx.beginPath();
  switch (shape) {
    case "circle":
      ctx.arc(x, y, r, 0, 2 * Math.PI);
      break;
    case "triangle":
      ctx.moveTo(x, y - r);
      ctx.lineTo(x - r, y + r);
      ctx.lineTo(x + r, y + r);
      ctx.closePath();
      break;
    case "square":
      ctx.rect(x - r, y - r, 2 * r, 2 * r);
      break;
    case "diamond":
      ctx.moveTo(x, y - r);
      ctx.lineTo(x + r, y);
      ctx.lineTo(x, y + r);
      ctx.lineTo(x - r, y);
      ctx.closePath();
      break;
  }
  ctx.fill();
}

function dataRange(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    lo = Math.min(lo, v);
    hi = Math.max(hi, v);
  }
  return [lo / 1.35, hi * 1.35];
}

export function renderFigure(fig: FigureData, outPath: string): void {
  const canvas = createCanvas(W, H);
  const ctx = canvas.getContext("2d");
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, W, H);
  const px0 = MARGIN.left;
  const px1 = W - MARGIN.right;
  const py0 = H - MARGIN.bottom;
  const py1 = MARGIN.top;

  const allY = fig.series.flatMap((s) => s.y);
  const [yLo, yHi] = dataRange(allY);
  const sy: Scale = (v) => py0 - ((log10(v) - log10(yLo)) / (log10(yHi) - log10(yLo))) * (py0 - py1);

  // x scales: shared log scale, or per-axis rank alignment for overlays
  let sxFor: (s: Series) => Scale;
  if (fig.rankAligned) {
    sxFor = (s) => {
      const n = s.x.length;
      return (v) => {
        const i = s.x.indexOf(v);
        const t = n === 1 ? 0.5 : i / (n - 1);
        return px0 + t * (px1 - px0);
      };
    };
  } else {
    const allX = fig.series.flatMap((s) => s.x);
    const [xLo, xHi] = dataRange(allX);
    const sx: Scale = (v) =>
      px0 + ((log10(v) - log10(xLo)) / (log10(xHi) - log10(xLo))) * (px1 - px0);
    sxFor = () => sx;

    ctx.strokeStyle = "#dddddd";
    ctx.fillStyle = "#333333";
    ctx.font = "13px sans-serif";
    ctx.textAlign = "center";
    for (const t of niceLogTicks(xLo, xHi)) {
      const x = sx(t);
      ctx.beginPath();
      ctx.moveTo(x, py0);
      ctx.lineTo(x, py1);
      ctx.stroke();
      ctx.fillText(fmtTick(t), x, py0 + 18);
    }
  }

  // y grid
  ctx.strokeStyle = "#dddddd";
  ctx.fillStyle = "#333333";
  ctx.font = "13px sans-serif";
  ctx.textAlign = "right";
  for (const t of niceLogTicks(yLo, yHi)) {
    const y = sy(t);
    ctx.beginPath();
    ctx.moveTo(px0, y);
    ctx.lineTo(px1, y);
    ctx.stroke();
    ctx.fillText(fmtTick(t), px0 - 8, y + 4);
  }

  // rank-aligned tick labels come from the series' own values
  if (fig.rankAligned) {
    ctx.textAlign = "center";
    for (const s of fig.series) {
      const scale = sxFor(s);
      for (const v of s.x) {
        const x = scale(v);
        if (s.axis === "bottom") {
          ctx.fillText(fmtTick(v), x, py0 + 18);
        } else {
          ctx.fillText(fmtTick(v), x, py1 - 8);
        }
      }
    }
  }

  // frame
  ctx.strokeStyle = "#000000";
  ctx.strokeRect(px0, py1, px1 - px0, py0 - py1);

  // series: markers, connecting line, dashed fitted line
  fig.series.forEach((s, i) => {
    const color = COLORS[i % COLORS.length];
    const marker = MARKERS[i % MARKERS.length];
    const sx = sxFor(s);
    ctx.strokeStyle = color;
    ctx.fillStyle = color;
    ctx.lineWidth = 1.6;
    ctx.beginPath();
    s.x.forEach((vx, k) => {
      const x = sx(vx);
      const y = sy(s.y[k]);
      if (k === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
    s.x.forEach((vx, k) => drawMarker(ctx, marker, sx(vx), sy(s.y[k]), 4.5));

    if (!fig.rankAligned) {
      // fitted line y = 2^(intercept) * x^(-rate), dashed
      ctx.setLineDash([6, 5]);
      ctx.lineWidth = 1.0;
      ctx.beginPath();
      const xs = [s.x[0], s.x[s.x.length - 1]];
      xs.forEach((vx, k) => {
        const fy = Math.pow(2, s.fit.intercept) * Math.pow(vx, -s.fit.rate);
        const x = sx(vx);
        const y = sy(fy);
        if (k === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      });
      ctx.stroke();
      ctx.setLineDash([]);
    }
  });

  // reference-slope triangles in the lower-left region
  ctx.strokeStyle = "#555555";
  ctx.fillStyle = "#555555";
  ctx.lineWidth = 1.2;
  fig.triangles.forEach((grad, i) => {
    const bx = px0 + 40 + i * 90;
    const by = py0 - 34;
    const run = 42;
    const rise = Math.min(14 * grad, 64);
    ctx.beginPath();
    ctx.moveTo(bx, by);
    ctx.lineTo(bx + run, by);
    ctx.lineTo(bx + run, by - rise);
    ctx.closePath();
    ctx.stroke();
    ctx.font = "12px sans-serif";
    ctx.textAlign = "left";
    ctx.fillText(String(grad), bx + run + 5, by - rise / 2 + 4);
  });

  // legend box
  ctx.font = "13px sans-serif";
  const legendW = Math.max(...fig.series.map((s) => ctx.measureText(s.label).width)) + 40;
  const legendH = fig.series.length * 20 + 12;
  const lx = px1 - legendW - 10;
  const ly = py1 + 10;
  ctx.fillStyle = "rgba(255,255,255,0.92)";
  ctx.fillRect(lx, ly, legendW, legendH);
  ctx.strokeStyle = "#888888";
  ctx.strokeRect(lx, ly, legendW, legendH);
  fig.series.forEach((s, i) => {
    const color = COLORS[i % COLORS.length];
    const y = ly + 16 + i * 20;
    ctx.fillStyle = color;
    drawMarker(ctx, MARKERS[i % MARKERS.length], lx + 14, y - 4, 4.5);
    ctx.fillStyle = "#000000";
    ctx.textAlign = "left";
    ctx.fillText(s.label, lx + 28, y);
  });

  // titles and axis labels
  ctx.fillStyle = "#000000";
  ctx.font = "bold 15px sans-serif";
  ctx.textAlign = "center";
  ctx.fillText(fig.title, (px0 + px1) / 2, 24);
  ctx.font = "14px sans-serif";
  ctx.fillText(fig.xLabel, (px0 + px1) / 2, H - 16);
  if (fig.topLabel) {
    ctx.fillText(`${fig.topLabel} (top axis)`, (px0 + px1) / 2, 42);
  }
  ctx.save();
  ctx.translate(20, (py0 + py1) / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(fig.yLabel, 0, 0);
  ctx.restore();

  fs.mkdirSync(path.dirname(path.resolve(outPath)), { recursive: true });
  fs.writeFileSync(outPath, canvas.toBuffer("image/png"));
}
