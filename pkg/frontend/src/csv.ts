/**
 * Strict parser for trajectory.csv (schema documented in docs/formats.md).
 * Any header or cell drift fails loudly with the row/column named.
 */

export const TRAJECTORY_COLUMNS = [
  "t",
  "px", "py", "pz",
  "vx", "vy", "vz",
  "qw", "qx", "qy", "qz",
  "roll", "pitch", "yaw",
  "tx", "ty", "tz",
  "est_prx", "est_pry", "est_prz",
  "est_vrx", "est_vry", "est_vrz",
  "est_qw", "est_qx", "est_qy", "est_qz",
  "est_pbx", "est_pby",
  "meas_pbx", "meas_pby",
  "true_pbx", "true_pby",
  "f_d",
  "wd_x", "wd_y", "wd_z",
  "z1", "lyapunov", "outer_update", "in_fov",
] as const;

export type TrajectoryColumn = (typeof TRAJECTORY_COLUMNS)[number];

export interface Trajectory {
  rows: number;
  col: (name: TrajectoryColumn) => Float64Array;
}

export function parseTrajectoryCsv(text: string): Trajectory {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new Error("trajectory.csv is empty");
  }
  const header = lines[0].split(",");
  if (header.length !== TRAJECTORY_COLUMNS.length) {
    throw new Error(
      `trajectory.csv header has ${header.length} columns, expected ${TRAJECTORY_COLUMNS.length}`,
    );
  }
  for (let i = 0; i < header.length; i++) {
    if (header[i] !== TRAJECTORY_COLUMNS[i]) {
      throw new Error(
        `trajectory.csv header column ${i + 1}: expected "${TRAJECTORY_COLUMNS[i]}", got "${header[i]}"`,
      );
    }
  }
  const n = lines.length - 1;
  if (n === 0) {
    throw new Error("trajectory.csv has a header but no data rows");
  }
  const data = new Map<string, Float64Array>();
  for (const name of TRAJECTORY_COLUMNS) {
    data.set(name, new Float64Array(n));
  }
  for (let r = 0; r < n; r++) {
    const cells = lines[r + 1].split(",");
    if (cells.length !== TRAJECTORY_COLUMNS.length) {
      throw new Error(`trajectory.csv row ${r + 2}: ${cells.length} cells, expected ${TRAJECTORY_COLUMNS.length}`);
    }
    for (let c = 0; c < cells.length; c++) {
      const cell = cells[c];
      const value = cell === "nan" || cell === "NaN" || cell === "" ? NaN : Number(cell);
      if (Number.isNaN(value) && !(cell === "nan" || cell === "NaN" || cell === "")) {
        throw new Error(`trajectory.csv row ${r + 2}, column "${TRAJECTORY_COLUMNS[c]}": not a number: "${cell}"`);
      }
      data.get(TRAJECTORY_COLUMNS[c])![r] = value;
    }
  }
  return {
    rows: n,
    col: (name) => {
      const arr = data.get(name);
      if (!arr) throw new Error(`unknown trajectory column: ${name}`);
      return arr;
    },
  };
}
