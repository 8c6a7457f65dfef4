"""Closed-loop engine, Monte Carlo batches, and miss-distance statistics.

Per-tick order: target step, plant step (previous command), truth geometry,
IMU sample, image pipeline, observer step, controller step; the command
applies from the next tick. A run terminates on contact, barrier violation,
track loss, or the duration limit.

Runs are deterministic given (scenario, seed): the single PRNG is Philox
(64-bit counter-based), one stream per run, and every noise draw happens at a
fixed point in the tick regardless of arm configuration, so paired arms see
identical noise realizations.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import so3
from .controller import BarrierViolated, ControllerConfig, ControllerInputs, InterceptionController, lyapunov_total
from .dynamics import (
    InterceptorParams,
    InterceptorState,
    TargetProfile,
    TargetState,
    relative_state,
    specific_force_body,
    step_interceptor,
    target_state_at,
)
from .observer import DelayedKalmanFilter, NoiseConfig, bearing_initial_state
from .sensing import (
    CameraModel,
    ImagePipeline,
    ImuModel,
    bearing_from_image,
    imu_sample,
    los_vector,
    project_to_image,
)

NOISE_PROBE_TICKS = 100  # draws tallied over this many ticks for pairing checks
REORTHO_EVERY = 1000     # polar re-orthonormalization cadence, ticks
PSD_CHECK_EVERY = 100    # covariance eigenvalue floor check cadence, ticks


class TallyRng:
    """Philox-backed generator that checksums its draws for pairing tests."""

    def __init__(self, seed: int):
        self.gen = np.random.Generator(np.random.Philox(key=seed))
        self.count = 0
        self.total = 0.0
        self.sumsq = 0.0
        self.frozen: tuple[int, float, float] | None = None

    def _tally(self, x) -> None:
        arr = np.atleast_1d(x)
        self.count += arr.size
        self.total += float(arr.sum())
        self.sumsq += float((arr * arr).sum())

    def normal(self, size=None):
        x = self.gen.normal(size=size)
        self._tally(x)
        return x

    def uniform(self, low=0.0, high=1.0, size=None):
        x = self.gen.uniform(low, high, size=size)
        self._tally(x)
        return x

    def freeze(self) -> None:
        if self.frozen is None:
            self.frozen = (self.count, self.total, self.sumsq)


@dataclass
class ObserverInitConfig:
    range_guess: float = 15.0
    range_from_truth: bool = False
    att_sigma: float = 0.01          # rad, initial attitude perturbation
    v_from_autopilot: bool = True    # start v_r at own velocity (target motion unknown)
    att_aiding: bool = True          # fold the autopilot attitude in at observer ticks
    att_aid_sigma: float = 0.003
    range_aiding: bool = False       # coarse range pseudo-measurement at observer ticks
    range_aid_sigma: float = 1.0
    sigma_range_frac: float = 0.4
    sigma_cross_frac: float = 0.02
    sigma_v: float = 2.0


@dataclass
class Scenario:
    interceptor: InterceptorParams = field(default_factory=InterceptorParams)
    initial_p: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -10.0]))
    initial_v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    initial_rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    target_profile: TargetProfile = field(default_factory=TargetProfile)
    target_initial_p: np.ndarray = field(default_factory=lambda: np.array([12.0, 0.0, -4.0]))
    camera: CameraModel = field(default_factory=CameraModel)
    imu: ImuModel = field(default_factory=ImuModel)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    observer_init: ObserverInitConfig = field(default_factory=ObserverInitConfig)
    duration_max: float = 12.0
    contact_radius: float = 0.25
    terminate_on_contact: bool = True
    flyby_margin: float = 1.0        # end a flyby once range exceeds best + margin
    engage_delay: float = 0.0        # s of hover-and-track before the pursuit starts
    dkf_enabled: bool = True
    observer_rate: float = 50.0
    feedback: str = "observer"       # "observer" | "truth"
    track_loss_timeout: float = 2.0
    buffer_capacity: int = 64
    log_trajectory: bool = True
    name: str = ""

    def __post_init__(self):
        self.initial_p = np.asarray(self.initial_p, dtype=float)
        self.initial_v = np.asarray(self.initial_v, dtype=float)
        self.initial_rot = np.asarray(self.initial_rot, dtype=float)
        self.target_initial_p = np.asarray(self.target_initial_p, dtype=float)
        if self.feedback not in ("observer", "truth"):
            raise ValueError("Scenario: feedback must be 'observer' or 'truth'")
        if self.contact_radius <= 0.0:
            raise ValueError("Scenario: contact_radius must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.imu.rate


@dataclass
class TrajectoryLog:
    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    quat: np.ndarray
    p_t: np.ndarray
    p_r_est: np.ndarray
    v_r_est: np.ndarray
    quat_est: np.ndarray
    p_bar_est: np.ndarray
    p_bar_meas: np.ndarray
    p_bar_true: np.ndarray
    f_d: np.ndarray
    omega_d: np.ndarray
    z1_true: np.ndarray
    lyapunov: np.ndarray
    outer_update: np.ndarray
    in_fov: np.ndarray


@dataclass
class RunResult:
    outcome: str                  # intercepted | barrier_violated | timeout | track_lost
    miss_distance: float
    miss_vector: np.ndarray
    terminal_speed: float
    closing_speed: float
    time_to_intercept: float
    events: list
    stats: dict
    seed: int
    noise_probe: tuple | None
    trajectory: TrajectoryLog | None
    target_in_fov_at_end: bool


@dataclass
class CepReport:
    name: str
    n_runs: int
    cep: float
    misses: list
    success_rate: float
    seeds: list
    outcomes: list
    miss_vectors: list

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("CepReport: n_runs must be >= 1")
        if self.cep < 0.0:
            raise ValueError("CepReport: cep must be >= 0")


class _MissTracker:
    """Running minimum of |p_r| with parabolic refinement between ticks."""

    def __init__(self):
        self.window: list[tuple[float, float, np.ndarray]] = []  # (t, dist, p_r)
        self.best = np.inf
        self.best_vec = np.full(3, np.nan)
        self.best_t = np.nan
        self.fov_at_best = False

    def push(self, t: float, dist: float, p_r: np.ndarray, in_fov: bool) -> None:
        self.window.append((t, dist, p_r.copy()))
        if len(self.window) > 3:
            self.window.pop(0)
        if dist < self.best:
            self.best = dist
            self.best_vec = p_r.copy()
            self.best_t = t
            self.fov_at_best = in_fov
        if len(self.window) == 3:
            (t0, d0, v0), (t1, d1, v1), (t2, d2, v2) = self.window
            if d1 <= d0 and d1 <= d2:
                denom = d0 - 2.0 * d1 + d2
                if denom > 1e-15:
                    s = 0.5 * (d0 - d2) / denom
                    s = min(1.0, max(-1.0, s))
                    d_star = d1 - 0.25 * (d0 - d2) * s
                    if d_star < self.best:
                        # Quadratic interpolation of the offset vector at s.
                        a = 0.5 * (v0 + v2) - v1
                        b = 0.5 * (v2 - v0)
                        self.best = max(d_star, 0.0)
                        self.best_vec = v1 + b * s + a * s * s
                        self.best_t = t1 + s * (t2 - t1)


def run_scenario(scenario: Scenario, seed: int = 0) -> RunResult:
    """One deterministic closed-loop run."""
    sc = scenario
    dt = sc.dt
    n_max = int(round(sc.duration_max / dt))
    rng = TallyRng(seed)

    params = sc.interceptor
    cam = sc.camera
    inter = InterceptorState(p=sc.initial_p.copy(), v=sc.initial_v.copy(),
                             rot=sc.initial_rot.copy(), omega=np.zeros(3))
    target0 = TargetState(sc.target_initial_p.copy(), np.zeros(3), np.zeros(3))
    target = target_state_at(sc.target_profile, target0, 0.0)

    p_r0, _ = relative_state(inter, target)
    bearing0 = los_vector(p_r0)
    controller = InterceptionController(sc.controller, r_cb=cam.r_cb)
    pipeline = ImagePipeline(cam, sc.imu.rate)

    use_observer = sc.feedback == "observer"
    filt = None
    if use_observer:
        rg = float(np.linalg.norm(p_r0)) if sc.observer_init.range_from_truth else sc.observer_init.range_guess
        filt = DelayedKalmanFilter(sc.noise, r_cb=cam.r_cb, g=params.g, buffer_capacity=sc.buffer_capacity)
        filt.initialize(
            bearing_initial_state(
                inter.rot, bearing0, rg, rng,
                att_sigma=sc.observer_init.att_sigma, r_cb=cam.r_cb,
                v_r0=inter.v if sc.observer_init.v_from_autopilot else None,
                sigma_range_frac=sc.observer_init.sigma_range_frac,
                sigma_cross_frac=sc.observer_init.sigma_cross_frac,
                sigma_v=sc.observer_init.sigma_v,
            )
        )

    obs_stride = max(1, int(round(sc.imu.rate / sc.observer_rate)))
    outer_stride = max(1, int(round(sc.imu.rate / sc.controller.outer_rate)))

    b_gyr = np.zeros(3)
    b_acc = np.zeros(3)
    cmd_f = params.m * params.g
    cmd_w = np.zeros(3)

    miss = _MissTracker()
    events: list = []
    log: dict[str, list] | None = None
    if sc.log_trajectory:
        log = {k: [] for k in (
            "t", "p", "v", "quat", "p_t", "p_r_est", "v_r_est", "quat_est",
            "p_bar_est", "p_bar_meas", "p_bar_true", "f_d", "omega_d",
            "z1_true", "lyapunov", "outer_update", "in_fov")}

    pending = []
    newest_raw = None
    pub = None               # (p_bar, p_r, v_r) snapshot published at observer ticks
    fov_at_approach = True
    last_feed_t = 0.0
    violations = 0
    outcome = "timeout"
    end_t = sc.duration_max
    prev_dist = float(np.linalg.norm(p_r0))
    closing = 0.0
    nan2 = np.full(2, np.nan)

    for k in range(1, n_max + 1):
        t = k * dt
        target = target_state_at(sc.target_profile, target0, t)
        inter = step_interceptor(inter, params, cmd_f, cmd_w, dt)
        if k % REORTHO_EVERY == 0:
            inter.rot = so3.orthonormalize(inter.rot)
        p_r, v_r = relative_state(inter, target)
        dist = float(np.linalg.norm(p_r))
        closing = (prev_dist - dist) / dt
        prev_dist = dist
        p_bar_true = project_to_image(p_r, inter.rot, cam)
        # At point-blank range the target fills the frame and the center-point
        # FOV test stops being meaningful; remember the final approach view.
        if dist >= 4.0 * sc.contact_radius:
            fov_at_approach = p_bar_true is not None
        miss.push(t, dist, p_r, p_bar_true is not None)
        if sc.terminate_on_contact and dist <= sc.contact_radius:
            end_t = t
            events.append((t, "contact"))
            break
        if not sc.terminate_on_contact and dist > miss.best + sc.flyby_margin and dist > 4.0 * sc.contact_radius:
            end_t = t
            events.append((t, "flyby_complete"))
            break

        sf = specific_force_body(inter, params, cmd_f)
        imu_s, b_gyr, b_acc = imu_sample(inter.omega, sf, b_gyr, b_acc, sc.imu, rng, t)
        arrivals = pipeline.step(p_bar_true, k, t, rng)
        if k == NOISE_PROBE_TICKS:
            rng.freeze()

        fresh = False
        est = None
        if use_observer:
            pending.extend(arrivals)
            obs_tick = k % obs_stride == 0
            to_apply = pending if obs_tick else []
            q_aid = None
            r_aid = None
            if obs_tick and sc.observer_init.att_aiding:
                q_aid = so3.rotmat_to_quat(inter.rot)
            if obs_tick and sc.observer_init.range_aiding:
                # Draw unconditionally at the aiding cadence (common random
                # numbers across paired arms).
                r_aid = dist + float(rng.normal()) * sc.observer_init.range_aid_sigma
            est = filt.dkf_step(k, t, imu_s, to_apply, dt,
                                q_aid=q_aid, q_aid_sigma=sc.observer_init.att_aid_sigma,
                                r_aid=r_aid, r_aid_sigma=sc.observer_init.range_aid_sigma)
            if obs_tick and pending:
                last_feed_t = t
                pending = []
            if arrivals:
                newest_raw = arrivals[-1].p_bar
            # Outer-loop pacing follows the image-family data: the observer's
            # publications in DKF mode, raw detections in direct mode. The
            # "fresh" flag is what triggers the collinear branch downstream.
            if sc.dkf_enabled:
                fresh = obs_tick
                ctl_p_bar = est.p_bar
            else:
                # Direct arm: raw delayed detections drive the outer loop.
                fresh = bool(arrivals)
                ctl_p_bar = newest_raw if newest_raw is not None else est.p_bar
            p_r_hat = est.p_r
            v_r_hat = est.v_r
            if t - max(last_feed_t, 0.0) > sc.track_loss_timeout:
                outcome = "track_lost"
                end_t = t
                events.append((t, "track_lost"))
                break
        else:
            fresh = (k % outer_stride == 0) and p_bar_true is not None
            ctl_p_bar = p_bar_true if p_bar_true is not None else np.zeros(2)
            p_r_hat, v_r_hat = p_r, v_r
            if p_bar_true is not None:
                last_feed_t = t
            elif t - last_feed_t > sc.track_loss_timeout:
                outcome = "track_lost"
                end_t = t
                events.append((t, "track_lost"))
                break

        if t < sc.engage_delay:
            # Pre-engagement acquisition: hover and steer the designed LOS onto
            # the target so the observer converges before the pursuit commits.
            n_t_acq = bearing_from_image(ctl_p_bar, inter.rot, cam.r_cb)
            n_td_acq = inter.rot @ sc.controller.n_td_body
            w_acq = 2.0 * (inter.rot.T @ np.cross(n_td_acq, n_t_acq))
            cmd_f = params.m * params.g
            cmd_w = so3.saturate(w_acq, sc.controller.omega_m)
        else:
            inputs = ControllerInputs(
                p_bar=ctl_p_bar, p_r_hat=p_r_hat, v_r_hat=v_r_hat,
                v=inter.v, rot=inter.rot, image_fresh=fresh,
            )
            try:
                cmd = controller.step(inputs)
            except BarrierViolated:
                outcome = "barrier_violated"
                end_t = t
                events.append((t, "barrier_violated"))
                break
            cmd_f, cmd_w = cmd.f_d, cmd.omega_d

        # Hard command invariants, every tick.
        if not (0.0 <= cmd_f <= sc.controller.f_m + 1e-12):
            violations += 1
        if np.linalg.norm(cmd_w) > sc.controller.omega_m + 1e-9:
            violations += 1
        if k % PSD_CHECK_EVERY == 0:
            if np.linalg.norm(inter.rot.T @ inter.rot - np.eye(3)) > 1e-8:
                violations += 1
            if use_observer:
                if not np.array_equal(est.p, est.p.T):
                    violations += 1
                if np.min(np.linalg.eigvalsh(est.p)) < -1e-9:
                    violations += 1

        if log is not None:
            n_td_e = inter.rot @ sc.controller.n_td_body
            n_t_e = los_vector(p_r)
            z1 = 1.0 - float(np.dot(n_td_e, n_t_e))
            lyap = lyapunov_total(p_r, v_r, n_t_e, n_td_e, inter.rot, controller.rot_d, sc.controller) \
                if abs(z1) < sc.controller.k_b else np.nan
            log["t"].append(t)
            log["p"].append(inter.p.copy())
            log["v"].append(inter.v.copy())
            log["quat"].append(so3.rotmat_to_quat(inter.rot))
            log["p_t"].append(target.p_t.copy())
            log["p_r_est"].append(p_r_hat.copy())
            log["v_r_est"].append(v_r_hat.copy())
            log["quat_est"].append(est.quat.copy() if est is not None else np.full(4, np.nan))
            log["p_bar_est"].append(est.p_bar.copy() if est is not None else
                                    (p_bar_true.copy() if p_bar_true is not None else nan2))
            log["p_bar_meas"].append(arrivals[-1].p_bar.copy() if (use_observer and arrivals) else nan2)
            log["p_bar_true"].append(p_bar_true.copy() if p_bar_true is not None else nan2)
            log["f_d"].append(cmd_f)
            log["omega_d"].append(cmd_w.copy())
            log["z1_true"].append(z1)
            log["lyapunov"].append(lyap)
            log["outer_update"].append(bool(fresh))
            log["in_fov"].append(p_bar_true is not None)

    stats = {
        "invariant_violations": violations,
        "frames_captured": pipeline.frames_captured,
        "frames_dropped": pipeline.frames_dropped,
        "frames_out_of_view": pipeline.frames_out_of_view,
        "corrections_applied": filt.corrections_applied if filt else 0,
        "measurements_too_old": filt.measurements_too_old if filt else 0,
        "final_range": prev_dist,
    }
    traj = None
    if log is not None and log["t"]:
        traj = TrajectoryLog(**{k: np.asarray(v) for k, v in log.items()})
    # A pass inside the contact radius is an interception no matter how the
    # run wound down afterwards (flyby mode keeps simulating past the target).
    intercepted = miss.best <= sc.contact_radius
    return RunResult(
        outcome="intercepted" if intercepted else outcome,
        miss_distance=float(miss.best),
        miss_vector=np.asarray(miss.best_vec),
        terminal_speed=float(np.linalg.norm(inter.v)),
        closing_speed=float(closing),
        time_to_intercept=float(miss.best_t) if intercepted else float("nan"),
        events=events,
        stats=stats,
        seed=seed,
        noise_probe=rng.frozen,
        trajectory=traj,
        target_in_fov_at_end=(fov_at_approach if intercepted else miss.fov_at_best),
    )


def _run_one(args) -> RunResult:
    scenario, seed = args
    return run_scenario(scenario, seed)


def monte_carlo(
    scenario: Scenario,
    n: int,
    base_seed: int = 0,
    workers: int | None = None,
    log_trajectories: bool = False,
) -> CepReport:
    """n seeded runs (base_seed .. base_seed+n-1); paired arms reuse seeds."""
    if n < 1:
        raise ValueError("monte_carlo: n must be >= 1")
    sc = replace(scenario, log_trajectory=log_trajectories)
    seeds = [base_seed + i for i in range(n)]
    if workers is None:
        workers = _default_workers()
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, [(sc, s) for s in seeds], chunksize=max(1, n // (4 * workers))))
    else:
        results = [run_scenario(sc, s) for s in seeds]
    misses = [r.miss_distance for r in results]
    outcomes = [r.outcome for r in results]
    return CepReport(
        name=scenario.name,
        n_runs=n,
        cep=cep(misses),
        misses=misses,
        success_rate=sum(1 for o in outcomes if o == "intercepted") / n,
        seeds=seeds,
        outcomes=outcomes,
        miss_vectors=[r.miss_vector.tolist() for r in results],
    )


def _default_workers() -> int:
    env = os.environ.get("INTERCEPT_SIM_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def cep(misses) -> float:
    """Circular error probable: interpolated median of radial miss distances."""
    arr = np.asarray(list(misses), dtype=float)
    if arr.size == 0:
        raise ValueError("cep: need at least one miss distance")
    return float(np.percentile(arr, 50.0, method="linear"))


def bootstrap_cep_diff(miss_a, miss_b, n_boot: int = 2000, seed: int = 12345):
    """Paired bootstrap of cep(a) - cep(b); returns (diffs, se)."""
    a = np.asarray(list(miss_a), dtype=float)
    b = np.asarray(list(miss_b), dtype=float)
    if a.shape != b.shape:
        raise ValueError("bootstrap_cep_diff: paired samples must have equal length")
    rng = np.random.default_rng(seed)
    n = a.size
    diffs = np.empty(n_boot)
    for i in range(n_boot):
        idx = rng.integers(0, n, size=n)
        diffs[i] = cep(a[idx]) - cep(b[idx])
    return diffs, float(np.std(diffs, ddof=1))
