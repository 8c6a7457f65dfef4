"""Command-line entry point: single runs, Monte Carlo batches, sweep presets.

Outputs are the language-neutral boundary for downstream tooling:
`trajectory.csv` per run, `result.json` per run, `batch.json` per batch.
Schemas are documented in docs/formats.md and must stay stable.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import so3
from .config import ConfigError, load_scenario
from .simulate import CepReport, RunResult, TrajectoryLog, monte_carlo, run_scenario

SCHEMA_VERSION = 1

CSV_COLUMNS = [
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
]


def _euler_zyx(q: np.ndarray) -> tuple[float, float, float]:
    rot = so3.quat_to_rotmat(q)
    pitch = float(np.arcsin(max(-1.0, min(1.0, -rot[2, 0]))))
    roll = float(np.arctan2(rot[2, 1], rot[2, 2]))
    yaw = float(np.arctan2(rot[1, 0], rot[0, 0]))
    return roll, pitch, yaw


def write_trajectory_csv(path: Path, traj: TrajectoryLog) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        n = len(traj.t)
        for i in range(n):
            roll, pitch, yaw = _euler_zyx(traj.quat[i])
            row = [
                traj.t[i],
                *traj.p[i], *traj.v[i], *traj.quat[i],
                roll, pitch, yaw,
                *traj.p_t[i],
                *traj.p_r_est[i], *traj.v_r_est[i], *traj.quat_est[i],
                *traj.p_bar_est[i], *traj.p_bar_meas[i], *traj.p_bar_true[i],
                traj.f_d[i], *traj.omega_d[i],
                traj.z1_true[i], traj.lyapunov[i],
                int(traj.outer_update[i]), int(traj.in_fov[i]),
            ]
            writer.writerow([f"{x:.9g}" if isinstance(x, (float, np.floating)) else x for x in row])


def result_to_dict(res: RunResult, config_echo: dict) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "outcome": res.outcome,
        "miss_distance": res.miss_distance,
        "miss_vector": [float(x) for x in np.asarray(res.miss_vector)],
        "terminal_speed": res.terminal_speed,
        "closing_speed": res.closing_speed,
        "time_to_intercept": None if np.isnan(res.time_to_intercept) else res.time_to_intercept,
        "target_in_fov_at_closest": bool(res.target_in_fov_at_end),
        "events": [[float(t), str(kind)] for t, kind in res.events],
        "stats": {k: (int(v) if isinstance(v, (int, np.integer)) else float(v)) for k, v in res.stats.items()},
        "seed": int(res.seed),
        "config": config_echo,
    }


def report_to_dict(rep: CepReport) -> dict:
    return {
        "name": rep.name,
        "n_runs": rep.n_runs,
        "cep": rep.cep,
        "success_rate": rep.success_rate,
        "misses": [float(m) for m in rep.misses],
        "seeds": [int(s) for s in rep.seeds],
        "outcomes": list(rep.outcomes),
        "miss_vectors": [[float(x) for x in v] for v in rep.miss_vectors],
    }


ARM_PRESETS = {
    "dkf-vs-direct": {
        "direct": {"dkf_enabled": False, "observer_rate": 50.0},
        "dkf50": {"dkf_enabled": True, "observer_rate": 50.0},
    },
    "rate-sweep-10-30-50": {
        "10Hz": {"dkf_enabled": True, "observer_rate": 10.0},
        "30Hz": {"dkf_enabled": True, "observer_rate": 30.0},
        "50Hz": {"dkf_enabled": True, "observer_rate": 50.0},
    },
}


def cmd_run(config_path: str, seed: int, out_dir: str) -> int:
    try:
        scenario, echo = load_scenario(config_path)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    scenario = replace(scenario, log_trajectory=True)
    res = run_scenario(scenario, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if res.trajectory is not None:
        write_trajectory_csv(out / "trajectory.csv", res.trajectory)
    (out / "result.json").write_text(json.dumps(result_to_dict(res, echo), indent=2))
    print(f"{res.outcome}: miss {res.miss_distance:.3f} m (seed {res.seed})")
    return 0 if res.outcome == "intercepted" else 2


def cmd_montecarlo(config_path: str, runs: int, arms: str | None, seed: int, out_dir: str,
                   save_trajectories: bool = False) -> int:
    try:
        scenario, echo = load_scenario(config_path)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    if runs < 1:
        print("config error: --runs must be >= 1", file=sys.stderr)
        return 1
    if arms is not None and arms not in ARM_PRESETS:
        print(f"config error: unknown arms preset {arms!r} "
              f"(available: {', '.join(sorted(ARM_PRESETS))})", file=sys.stderr)
        return 1
    arm_map = ARM_PRESETS[arms] if arms else {"default": {}}

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    batch: dict = {"schema": SCHEMA_VERSION, "preset": arms, "base_seed": seed, "arms": {}, "config": echo}
    for arm_name, overrides in arm_map.items():
        arm_scenario = replace(scenario, name=arm_name, **overrides)
        rep = monte_carlo(arm_scenario, runs, base_seed=seed, log_trajectories=save_trajectories)
        batch["arms"][arm_name] = report_to_dict(rep)
        print(f"{arm_name}: cep {rep.cep:.3f} m, success {rep.success_rate:.0%} over {runs} runs")
    (out / "batch.json").write_text(json.dumps(batch, indent=2))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="intercept-sim",
        description="Closed-loop visual-servoing interception simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single closed-loop run")
    p_run.add_argument("config", help="scenario config (JSON, schema 1)")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", default="out")

    p_mc = sub.add_parser("montecarlo", help="seeded Monte Carlo batch")
    p_mc.add_argument("config", help="scenario config (JSON, schema 1)")
    p_mc.add_argument("--runs", type=int, default=50)
    p_mc.add_argument("--arms", default=None, help="|".join(sorted(ARM_PRESETS)))
    p_mc.add_argument("--seed", type=int, default=0)
    p_mc.add_argument("--out", default="out")
    p_mc.add_argument("--save-trajectories", action="store_true")

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.seed, args.out)
    return cmd_montecarlo(args.config, args.runs, args.arms, args.seed, args.out,
                          save_trajectories=args.save_trajectories)


if __name__ == "__main__":
    sys.exit(main())
