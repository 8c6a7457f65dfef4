/**
 * The five figure kinds rendered from simulator outputs:
 * trajectory3d, image_coords, attitude (from trajectory.csv),
 * boxplot, cep_scatter (from batch.json).
 */

import { Batch, parseBatch } from "./batch";
import { parseTrajectoryCsv, Trajectory } from "./csv";
import { axes, dots, document as svgDocument, extentOf, Frame, legend, polyline } from "./svg";

export const FIGURE_KINDS = ["trajectory3d", "image_coords", "attitude", "boxplot", "cep_scatter"] as const;
export type FigureKind = (typeof FIGURE_KINDS)[number];

const ISO = Math.PI / 6;

// Orthographic projection with z (down in the data) drawn upward.
function isoProject(x: Float64Array, y: Float64Array, z: Float64Array): [Float64Array, Float64Array] {
  const u = new Float64Array(x.length);
  const v = new Float64Array(x.length);
  for (let i = 0; i < x.length; i++) {
    u[i] = (x[i] - y[i]) * Math.cos(ISO);
    v[i] = -z[i] + (x[i] + y[i]) * Math.sin(ISO) * 0.5;
  }
  return [u, v];
}

export function trajectory3dFigure(traj: Trajectory): string {
  const [iu, iv] = isoProject(traj.col("px"), traj.col("py"), traj.col("pz"));
  const [tu, tv] = isoProject(traj.col("tx"), traj.col("ty"), traj.col("tz"));
  const all_u = Float64Array.from([...iu, ...tu]);
  const all_v = Float64Array.from([...iv, ...tv]);
  const frame = new Frame(extentOf(all_u), extentOf(all_v));
  const body = [
    axes(frame, "east-north (iso)", "altitude (iso)", "interceptor and target paths"),
    polyline(frame, iu, iv, "#1f77b4", "interceptor"),
    polyline(frame, tu, tv, "#d62728", "target", "4 3"),
    dots(frame, iu.slice(0, 1), iv.slice(0, 1), "#1f77b4", "interceptor-start", 4),
    dots(frame, tu.slice(-1), tv.slice(-1), "#d62728", "target-end", 4),
    legend(frame, [["interceptor", "#1f77b4"], ["target", "#d62728"]]),
  ].join("\n");
  return svgDocument(frame, body);
}

export function imageCoordsFigure(traj: Trajectory): string {
  const t = traj.col("t");
  const frame = new Frame(
    extentOf(t),
    extentOf(Float64Array.from([
      ...traj.col("est_pbx"), ...traj.col("est_pby"),
      ...traj.col("meas_pbx"), ...traj.col("meas_pby"),
    ])),
  );
  const body = [
    axes(frame, "time (s)", "normalized image coordinate", "image point: measured vs estimated"),
    polyline(frame, t, traj.col("est_pbx"), "#1f77b4", "estimated"),
    polyline(frame, t, traj.col("est_pby"), "#17becf", "estimated"),
    dots(frame, t, traj.col("meas_pbx"), "#d62728", "measured"),
    dots(frame, t, traj.col("meas_pby"), "#ff7f0e", "measured"),
    legend(frame, [
      ["x estimated", "#1f77b4"],
      ["y estimated", "#17becf"],
      ["x measured", "#d62728"],
      ["y measured", "#ff7f0e"],
    ]),
  ].join("\n");
  return svgDocument(frame, body);
}

export function attitudeFigure(traj: Trajectory): string {
  const t = traj.col("t");
  const toDeg = (a: Float64Array) => Float64Array.from(a, (r) => (r * 180) / Math.PI);
  const roll = toDeg(traj.col("roll"));
  const pitch = toDeg(traj.col("pitch"));
  const yaw = toDeg(traj.col("yaw"));
  const frame = new Frame(extentOf(t), extentOf(Float64Array.from([...roll, ...pitch, ...yaw])));
  const body = [
    axes(frame, "time (s)", "attitude (deg)", "attitude angles"),
    polyline(frame, t, roll, "#1f77b4", "roll"),
    polyline(frame, t, pitch, "#d62728", "pitch"),
    polyline(frame, t, yaw, "#2ca02c", "yaw"),
    legend(frame, [["roll", "#1f77b4"], ["pitch", "#d62728"], ["yaw", "#2ca02c"]]),
  ].join("\n");
  return svgDocument(frame, body);
}

function quantile(sorted: number[], q: number): number {
  if (sorted.length === 1) return sorted[0];
  const pos = q * (sorted.length - 1);
  const lo = Math.floor(pos);
  const hi = Math.ceil(pos);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo);
}

export function boxplotFigure(batch: Batch): string {
  const names = [...batch.arms.keys()];
  const allMisses = names.flatMap((n) => batch.arms.get(n)!.misses);
  const frame = new Frame({ min: -0.5, max: names.length - 0.5 }, extentOf(Float64Array.from([0, ...allMisses])));
  const parts: string[] = [axes(frame, "arm", "miss distance (m)", "miss distance by arm")];
  names.forEach((name, i) => {
    const sorted = [...batch.arms.get(name)!.misses].sort((a, b) => a - b);
    const q1 = quantile(sorted, 0.25);
    const q2 = quantile(sorted, 0.5);
    const q3 = quantile(sorted, 0.75);
    const iqr = q3 - q1;
    const lowWhisk = Math.min(...sorted.filter((v) => v >= q1 - 1.5 * iqr));
    const highWhisk = Math.max(...sorted.filter((v) => v <= q3 + 1.5 * iqr));
    const cx = frame.px(i);
    const half = 22;
    parts.push(
      `<g data-series="box" data-arm="${name}">`,
      `<rect x="${cx - half}" y="${frame.py(q3).toFixed(1)}" width="${2 * half}" height="${(frame.py(q1) - frame.py(q3)).toFixed(1)}" fill="#aec7e8" stroke="#1f77b4"/>`,
      `<line x1="${cx - half}" x2="${cx + half}" y1="${frame.py(q2).toFixed(1)}" y2="${frame.py(q2).toFixed(1)}" stroke="#1f77b4" stroke-width="2"/>`,
      `<line x1="${cx}" x2="${cx}" y1="${frame.py(highWhisk).toFixed(1)}" y2="${frame.py(q3).toFixed(1)}" stroke="#1f77b4"/>`,
      `<line x1="${cx}" x2="${cx}" y1="${frame.py(q1).toFixed(1)}" y2="${frame.py(lowWhisk).toFixed(1)}" stroke="#1f77b4"/>`,
      `</g>`,
      `<text x="${cx}" y="${frame.height - frame.margin + 28}" font-size="11" text-anchor="middle">${name}</text>`,
    );
    for (const v of sorted) {
      if (v < q1 - 1.5 * iqr || v > q3 + 1.5 * iqr) {
        parts.push(`<circle data-series="outlier" cx="${cx}" cy="${frame.py(v).toFixed(1)}" r="2" fill="#d62728"/>`);
      }
    }
  });
  return svgDocument(frame, parts.join("\n"));
}

const ARM_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

export function cepScatterFigure(batch: Batch): string {
  const names = [...batch.arms.keys()];
  const xs: number[] = [];
  const ys: number[] = [];
  for (const n of names) {
    for (const v of batch.arms.get(n)!.missVectors) {
      xs.push(v[0]);
      ys.push(v[1]);
    }
  }
  const ceps = names.map((n) => batch.arms.get(n)!.cep);
  const reach = Math.max(...ceps, ...xs.map(Math.abs), ...ys.map(Math.abs), 0.1) * 1.15;
  const frame = new Frame({ min: -reach, max: reach }, { min: -reach, max: reach }, 480, 480);
  const parts: string[] = [
    axes(frame, "east miss (m)", "north miss (m)", "closest-approach scatter with CEP circles"),
    `<line x1="${frame.px(-reach)}" x2="${frame.px(reach)}" y1="${frame.py(0)}" y2="${frame.py(0)}" stroke="#ccc"/>`,
    `<line x1="${frame.px(0)}" x2="${frame.px(0)}" y1="${frame.py(-reach)}" y2="${frame.py(reach)}" stroke="#ccc"/>`,
  ];
  names.forEach((name, i) => {
    const color = ARM_COLORS[i % ARM_COLORS.length];
    const arm = batch.arms.get(name)!;
    const ax = Float64Array.from(arm.missVectors, (v) => v[0]);
    const ay = Float64Array.from(arm.missVectors, (v) => v[1]);
    const r = ((arm.cep / (frame.x.max - frame.x.min)) * (frame.width - 2 * frame.margin)).toFixed(1);
    parts.push(
      dots(frame, ax, ay, color, `scatter-${name}`, 2.6),
      `<circle data-series="cep-${name}" cx="${frame.px(0)}" cy="${frame.py(0)}" r="${r}" fill="none" stroke="${color}" stroke-dasharray="5 4"/>`,
    );
  });
  parts.push(legend(frame, names.map((n, i) => [n, ARM_COLORS[i % ARM_COLORS.length]] as [string, string])));
  return svgDocument(frame, parts.join("\n"));
}

export function makeFigure(kind: FigureKind, inputText: string): string {
  switch (kind) {
    case "trajectory3d":
      return trajectory3dFigure(parseTrajectoryCsv(inputText));
    case "image_coords":
      return imageCoordsFigure(parseTrajectoryCsv(inputText));
    case "attitude":
      return attitudeFigure(parseTrajectoryCsv(inputText));
    case "boxplot":
      return boxplotFigure(parseBatch(inputText));
    case "cep_scatter":
      return cepScatterFigure(parseBatch(inputText));
    default: {
      const never: never = kind;
      throw new Error(`unknown figure kind: ${never}`);
    }
  }
}
