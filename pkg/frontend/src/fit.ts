/**
 * Least-squares rate fit in log2-log2 coordinates, matching the producer's
 * convention: rate = -slope, so decaying errors report positive rates.
 */

export interface RateFit {
  rate: number;
  intercept: number;
  n: number;
}

export function fitRate(xs: number[], ys: number[]): RateFit {
  if (xs.length !== ys.length || xs.length < 2) {
    throw new Error(`rate fit needs matching x/y with >= 2 points, got ${xs.length}`);
  }
  if (xs.some((v) => v <= 0) || ys.some((v) => v <= 0)) {
    throw new Error("rate fit requires positive values");
  }
  const lx = xs.map(Math.log2);
  const ly = ys.map(Math.log2);
  const n = lx.length;
  const mx = lx.reduce((a, b) => a + b, 0) / n;
  const my = ly.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  const slope = sxy / sxx;
  return { rate: -slope, intercept: my - slope * mx, n };
}
