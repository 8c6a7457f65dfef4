/** Minimal deterministic SVG assembly: axes, polylines, dots, labels. */

export interface Extent {
  min: number;
  max: number;
}

export function extentOf(values: ArrayLike<number>, pad = 0.05): Extent {
  let min = Infinity;
  let max = -Infinity;
  for (let i = 0; i < values.length; i++) {
    const v = values[i];
    if (Number.isNaN(v)) continue;
    if (v < min) min = v;
    if (v > max) max = v;
  }
  if (!Number.isFinite(min) || !Number.isFinite(max)) {
    throw new Error("no finite values to plot");
  }
  if (min === max) {
    min -= 0.5;
    max += 0.5;
  }
  const span = max - min;
  return { min: min - pad * span, max: max + pad * span };
}

export class Frame {
  constructor(
    readonly x: Extent,
    readonly y: Extent,
    readonly width = 640,
    readonly height = 420,
    readonly margin = 48,
  ) {}

  px(v: number): number {
    return this.margin + ((v - this.x.min) / (this.x.max - this.x.min)) * (this.width - 2 * this.margin);
  }

  // SVG y grows downward; plot coordinates grow upward.
  py(v: number): number {
    return this.height - this.margin - ((v - this.y.min) / (this.y.max - this.y.min)) * (this.height - 2 * this.margin);
  }
}

const fmt = (v: number) => (Math.abs(v) < 1e-12 ? "0" : v.toPrecision(4));

export function polyline(
  frame: Frame,
  xs: ArrayLike<number>,
  ys: ArrayLike<number>,
  color: string,
  series: string,
  dash = "",
): string {
  const segments: string[] = [];
  let current: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    if (Number.isNaN(xs[i]) || Number.isNaN(ys[i])) {
      if (current.length > 1) segments.push(current.join(" "));
      current = [];
      continue;
    }
    current.push(`${frame.px(xs[i]).toFixed(2)},${frame.py(ys[i]).toFixed(2)}`);
  }
  if (current.length > 1) segments.push(current.join(" "));
  return segments
    .map(
      (pts) =>
        `<polyline data-series="${series}" fill="none" stroke="${color}"` +
        (dash ? ` stroke-dasharray="${dash}"` : "") +
        ` stroke-width="1.5" points="${pts}"/>`,
    )
    .join("\n");
}

export function dots(
  frame: Frame,
  xs: ArrayLike<number>,
  ys: ArrayLike<number>,
  color: string,
  series: string,
  r = 2.2,
): string {
  const out: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    if (Number.isNaN(xs[i]) || Number.isNaN(ys[i])) continue;
    out.push(
      `<circle data-series="${series}" cx="${frame.px(xs[i]).toFixed(2)}" cy="${frame.py(ys[i]).toFixed(2)}" r="${r}" fill="${color}"/>`,
    );
  }
  return out.join("\n");
}

export function axes(frame: Frame, xLabel: string, yLabel: string, title: string): string {
  const m = frame.margin;
  const w = frame.width;
  const h = frame.height;
  const ticks: string[] = [];
  for (let i = 0; i <= 4; i++) {
    const xv = frame.x.min + ((frame.x.max - frame.x.min) * i) / 4;
    const yv = frame.y.min + ((frame.y.max - frame.y.min) * i) / 4;
    ticks.push(
      `<text x="${frame.px(xv).toFixed(1)}" y="${h - m + 16}" font-size="10" text-anchor="middle">${fmt(xv)}</text>`,
      `<text x="${m - 6}" y="${(frame.py(yv) + 3).toFixed(1)}" font-size="10" text-anchor="end">${fmt(yv)}</text>`,
    );
  }
  return [
    `<rect x="${m}" y="${m}" width="${w - 2 * m}" height="${h - 2 * m}" fill="none" stroke="#999"/>`,
    ...ticks,
    `<text x="${w / 2}" y="${h - 10}" font-size="12" text-anchor="middle">${xLabel}</text>`,
    `<text x="14" y="${h / 2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 ${h / 2})">${yLabel}</text>`,
    `<text x="${w / 2}" y="20" font-size="13" text-anchor="middle" font-weight="bold">${title}</text>`,
  ].join("\n");
}

export function legend(frame: Frame, entries: [string, string][]): string {
  const out: string[] = [];
  entries.forEach(([label, color], i) => {
    const y = frame.margin + 14 + i * 14;
    const x = frame.width - frame.margin - 110;
    out.push(
      `<rect x="${x}" y="${y - 8}" width="10" height="3" fill="${color}"/>`,
      `<text x="${x + 16}" y="${y - 3}" font-size="10">${label}</text>`,
    );
  });
  return out.join("\n");
}

export function document(frame: Frame, body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${frame.width}" height="${frame.height}" ` +
    `viewBox="0 0 ${frame.width} ${frame.height}" font-family="sans-serif">\n` +
    `<rect width="100%" height="100%" fill="white"/>\n${body}\n</svg>\n`
  );
}
