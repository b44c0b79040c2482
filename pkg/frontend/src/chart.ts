/** A dependency-free SVG line chart, sized for the client panel's monitoring
 * view: one series, one horizontal threshold line. Pure string output so the
 * rendering is trivially testable and the page carries no chart library. */

export interface ChartPoint {
  t: number; // epoch millis
  v: number;
}

export interface ChartOptions {
  width?: number;
  height?: number;
  pad?: number;
  threshold?: number | null;
}

export interface ChartScales {
  x: (t: number) => number;
  y: (v: number) => number;
  xDomain: [number, number];
  yDomain: [number, number];
}

const DEFAULTS = { width: 560, height: 180, pad: 14 };

/** Compute the pixel scales for a point set. The y-domain always includes
 * the threshold so the line is visible even when all samples sit on one
 * side of it. Degenerate domains (single point, flat series) get a unit
 * span so division stays finite. */
export function chartScales(points: ChartPoint[], opts: ChartOptions = {}): ChartScales {
  const { width, height, pad } = { ...DEFAULTS, ...opts };
  const ts = points.map((p) => p.t);
  const vs = points.map((p) => p.v);
  if (opts.threshold != null) vs.push(opts.threshold);

  let tLo = Math.min(...ts);
  let tHi = Math.max(...ts);
  if (!isFinite(tLo) || tLo === tHi) {
    tLo = (isFinite(tLo) ? tLo : 0) - 1;
    tHi = tLo + 2;
  }
  let vLo = Math.min(...vs);
  let vHi = Math.max(...vs);
  if (!isFinite(vLo) || vLo === vHi) {
    vLo = (isFinite(vLo) ? vLo : 0) - 0.5;
    vHi = vLo + 1;
  }

  const x = (t: number) => pad + ((t - tLo) / (tHi - tLo)) * (width - 2 * pad);
  const y = (v: number) => height - pad - ((v - vLo) / (vHi - vLo)) * (height - 2 * pad);
  return { x, y, xDomain: [tLo, tHi], yDomain: [vLo, vHi] };
}

function fmt(n: number): string {
  return String(Math.round(n * 100) / 100);
}

/** Render the chart as an SVG string. Empty input produces a labelled
 * placeholder rather than an empty 0x0 box. */
export function lineChart(points: ChartPoint[], opts: ChartOptions = {}): string {
  const { width, height } = { ...DEFAULTS, ...opts };
  if (points.length === 0) {
    return (
      `<svg class="chart" viewBox="0 0 ${width} ${height}" role="img">` +
      `<text x="${width / 2}" y="${height / 2}" text-anchor="middle" class="chart-empty">` +
      `no monitoring samples yet</text></svg>`
    );
  }

  const scales = chartScales(points, opts);
  const sorted = [...points].sort((a, b) => a.t - b.t);
  const path = sorted
    .map((p, i) => `${i === 0 ? "M" : "L"}${fmt(scales.x(p.t))},${fmt(scales.y(p.v))}`)
    .join(" ");

  let thresholdLine = "";
  if (opts.threshold != null) {
    const ty = fmt(scales.y(opts.threshold));
    thresholdLine =
      `<line class="threshold" x1="0" x2="${width}" y1="${ty}" y2="${ty}" ` +
      `stroke-dasharray="6 4"></line>` +
      `<text class="threshold-label" x="${width - 4}" y="${fmt(scales.y(opts.threshold) - 4)}" ` +
      `text-anchor="end">threshold ${opts.threshold}</text>`;
  }

  const dots = sorted
    .map((p) => `<circle cx="${fmt(scales.x(p.t))}" cy="${fmt(scales.y(p.v))}" r="2.5"></circle>`)
    .join("");

  return (
    `<svg class="chart" viewBox="0 0 ${width} ${height}" role="img">` +
    `<path class="series" d="${path}" fill="none"></path>` +
    dots +
    thresholdLine +
    `</svg>`
  );
}
