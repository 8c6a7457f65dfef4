"""18-state delayed Kalman filter: IMU-driven prediction, image retro-correction.

State layout (all earth-frame unless noted):

    x[0:4]   q        attitude quaternion, body->earth, scalar first
    x[4:7]   p_r      relative position (interceptor - target), m
    x[7:10]  v_r      relative velocity, m/s
    x[10:12] p_bar    normalized image point of the target
    x[12:15] b_gyr    gyroscope bias, rad/s
    x[15:18] b_acc    accelerometer bias, m/s^2

The quaternion is carried additively inside the 18x18 covariance and
renormalized after every predict and correction. All quaternion-dependent
Jacobian blocks differentiate the homogeneous quadratic rotation matrix, so
the raw mean map (`propagate_mean`, no renormalization, image depth frozen)
and `transition_jacobians` agree exactly with finite differences.

A delayed image measurement captured D ticks ago corrects the stored prior at
its capture tick and is then re-propagated to the present with the stored IMU
samples, covariance included; the refreshed priors overwrite the buffer so a
later measurement sees exactly the state a zero-delay filter would have had.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .sensing import CAMERA_FORWARD, ImageMeasurement, ImuSample
from .so3 import exp_so3_vec, quat_to_rotmat, rotmat_to_quat

Q = slice(0, 4)
PR = slice(4, 7)
VR = slice(7, 10)
PB = slice(10, 12)
BG = slice(12, 15)
BA = slice(15, 18)

DEPTH_FLOOR = 0.05   # m, below this the image sub-state stops propagating
P_BAR_MAX = 5.0      # normalized; beyond any realistic FOV the image rows freeze


@dataclass
class NoiseConfig:
    q: np.ndarray = field(default_factory=lambda: np.diag([0.005 ** 2] * 3 + [0.05 ** 2] * 3))
    r_img: np.ndarray = field(default_factory=lambda: np.eye(2) * 0.002 ** 2)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.r_img = np.asarray(self.r_img, dtype=float)
        for m, n in ((self.q, 6), (self.r_img, 2)):
            if m.shape != (n, n) or not np.allclose(m, m.T):
                raise ValueError("NoiseConfig: covariances must be symmetric with the right shape")
            if np.any(np.linalg.eigvalsh(m) < -1e-12):
                raise ValueError("NoiseConfig: covariances must be PSD")


@dataclass
class FilterState:
    x: np.ndarray
    p: np.ndarray
    image_valid: bool = True

    @property
    def quat(self) -> np.ndarray:
        return self.x[Q]

    @property
    def p_r(self) -> np.ndarray:
        return self.x[PR]

    @property
    def v_r(self) -> np.ndarray:
        return self.x[VR]

    @property
    def p_bar(self) -> np.ndarray:
        return self.x[PB]

    @property
    def b_gyr(self) -> np.ndarray:
        return self.x[BG]

    @property
    def b_acc(self) -> np.ndarray:
        return self.x[BA]

    def copy(self) -> "FilterState":
        return FilterState(self.x.copy(), self.p.copy(), self.image_valid)


@dataclass
class BufferRecord:
    tick: int
    t: float
    imu: ImuSample
    prior_x: np.ndarray
    prior_p: np.ndarray
    q_aid: np.ndarray | None = None
    q_aid_sigma: float = 0.0
    r_aid: float | None = None
    r_aid_sigma: float = 0.0


class HistoryBuffer:
    """Ring of per-tick records; oldest evicted past capacity."""

    def __init__(self, capacity: int = 64):
        if capacity < 1:
            raise ValueError("HistoryBuffer: capacity must be >= 1")
        self.capacity = capacity
        self._records: deque[BufferRecord] = deque(maxlen=capacity)

    def append(self, rec: BufferRecord) -> None:
        if self._records and rec.tick <= self._records[-1].tick:
            raise ValueError("HistoryBuffer: ticks must be strictly increasing")
        self._records.append(rec)

    def index_of(self, tick: int) -> int | None:
        if not self._records:
            return None
        first = self._records[0].tick
        idx = tick - first
        if idx < 0 or idx >= len(self._records):
            return None
        return idx

    def __len__(self) -> int:
        return len(self._records)

    def __getitem__(self, i: int) -> BufferRecord:
        return self._records[i]


def quat_update_matrix(w: np.ndarray, dt: float) -> np.ndarray:
    """First-order quaternion transition M(dq): q_k = M q_{k-1}."""
    hx, hy, hz = 0.5 * dt * w
    return np.array([
        [1.0, -hx, -hy, -hz],
        [hx, 1.0, hz, -hy],
        [hy, -hz, 1.0, hx],
        [hz, hy, -hx, 1.0],
    ])


def quat_bias_block(q: np.ndarray, dt: float) -> np.ndarray:
    """d(q_k)/d(b_gyr): the 4x3 quaternion-bias coupling block (times dt)."""
    q0, q1, q2, q3 = q
    return 0.5 * dt * np.array([
        [q1, q2, q3],
        [-q0, q3, -q2],
        [-q3, -q0, q1],
        [q2, -q1, -q0],
    ])


def m1_m2_m3(q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half-derivatives of the homogeneous R(q) rows: d(R a)_i/dq_j = 2 M_i[j,:] a."""
    q0, q1, q2, q3 = q
    m1 = np.array([[q0, -q3, q2], [q1, q2, q3], [-q2, q1, q0], [-q3, -q0, q1]])
    m2 = np.array([[q3, q0, -q1], [q2, -q1, -q0], [q1, q2, q3], [q0, -q3, q2]])
    m3 = np.array([[-q2, q1, q0], [q3, q0, -q1], [-q0, q3, -q2], [q1, q2, q3]])
    return m1, m2, m3


def jac_rotated_vec_wrt_quat(q: np.ndarray, u: np.ndarray) -> np.ndarray:
    """d(R(q) u)/dq for the homogeneous quadratic R(q); shape (3, 4)."""
    m1, m2, m3 = m1_m2_m3(q)
    return 2.0 * np.vstack([m1 @ u, m2 @ u, m3 @ u])


def m4_matrix(q: np.ndarray, p_bar_x: float, r_cb: np.ndarray) -> np.ndarray:
    """Image-row quaternion coupling for the p_bar_x transfer (4x3)."""
    u = r_cb @ np.array([-1.0, 0.0, p_bar_x])
    return jac_rotated_vec_wrt_quat(q, u).T

def m5_matrix(q: np.ndarray, p_bar_y: float, r_cb: np.ndarray) -> np.ndarray:
    """Image-row quaternion coupling for the p_bar_y transfer (4x3)."""
    u = r_cb @ np.array([0.0, -1.0, p_bar_y])
    return jac_rotated_vec_wrt_quat(q, u).T


def depth_in_camera(x: np.ndarray, r_cb: np.ndarray) -> float:
    """Camera-frame z of the target implied by the state (no sign check)."""
    rot = quat_to_rotmat(x[Q])
    return float((r_cb.T @ (rot.T @ (-x[PR])))[2])


def estimate_depth(state: FilterState, r_cb: np.ndarray) -> float:
    """Target depth along the optical axis; raises when behind the camera."""
    p_zc = depth_in_camera(state.x, r_cb)
    if p_zc <= 0.0:
        raise ValueError("estimate_depth: target behind camera")
    return p_zc


def _image_terms(x: np.ndarray, w_hat: np.ndarray, r_cb: np.ndarray):
    px, py = x[PB]
    a0 = np.array([[-1.0, 0.0, px], [0.0, -1.0, py]])
    b = np.array([
        [px * py, -(1.0 + px * px), py],
        [1.0 + py * py, -px * py, -px],
    ])
    rot = quat_to_rotmat(x[Q])
    v_c = r_cb.T @ (rot.T @ x[VR])
    w_c = r_cb.T @ w_hat
    return a0, b, v_c, w_c


def propagate_mean(
    x: np.ndarray,
    imu: ImuSample,
    dt: float,
    g: float,
    r_cb: np.ndarray,
    p_zc: float | None,
) -> np.ndarray:
    """Raw one-step mean recursion (no renormalization, depth frozen at p_zc).

    Pass p_zc=None to freeze the image rows (target behind camera).
    """
    w_hat = imu.omega_meas - x[BG]
    a_body = imu.a_meas - x[BA]
    rot = quat_to_rotmat(x[Q])

    out = x.copy()
    out[Q] = quat_update_matrix(w_hat, dt) @ x[Q]
    accel = rot @ a_body
    accel[2] += g
    out[VR] = x[VR] + accel * dt
    out[PR] = x[PR] + 0.5 * (x[VR] + out[VR]) * dt
    if p_zc is not None:
        a0, b, v_c, w_c = _image_terms(x, w_hat, r_cb)
        out[PB] = x[PB] + ((a0 @ v_c) / p_zc + b @ w_c) * dt
    return out


def transition_jacobians(
    x: np.ndarray,
    imu: ImuSample,
    dt: float,
    g: float,
    r_cb: np.ndarray,
    p_zc: float | None,
) -> tuple[np.ndarray, np.ndarray]:
    """State transition F (18x18) and noise coupling G (18x6) at the given state.

    Column order of G: gyro measurement noise (0:3), accel measurement noise
    (3:6). Image rows are frozen to identity when p_zc is None.
    """
    w_hat = imu.omega_meas - x[BG]
    a_body = imu.a_meas - x[BA]
    q = x[Q]
    rot = quat_to_rotmat(q)

    f = np.zeros((18, 18))
    gmat = np.zeros((18, 6))

    f[Q, Q] = quat_update_matrix(w_hat, dt)
    qb = quat_bias_block(q, dt)
    f[Q, BG] = qb
    gmat[Q, 0:3] = qb

    f[PR, PR] = np.eye(3)
    f[PR, VR] = np.eye(3) * dt

    f[VR, VR] = np.eye(3)
    f[VR, Q] = jac_rotated_vec_wrt_quat(q, a_body) * dt
    f[VR, BA] = -rot * dt
    gmat[VR, 3:6] = -rot * dt

    if p_zc is not None:
        a0, b, v_c, w_c = _image_terms(x, w_hat, r_cb)
        px, py = x[PB]
        u0 = r_cb @ a0[0]
        u1 = r_cb @ a0[1]
        f[PB, Q] = (dt / p_zc) * np.vstack([
            x[VR] @ jac_rotated_vec_wrt_quat(q, u0),
            x[VR] @ jac_rotated_vec_wrt_quat(q, u1),
        ])
        f[PB, VR] = (dt / p_zc) * (a0 @ r_cb.T @ rot.T)
        wx, wy, wz = w_c
        vz_over_pz = v_c[2] / p_zc
        f[PB, PB] = np.eye(2) + dt * np.array([
            [vz_over_pz + py * wx - 2.0 * px * wy, px * wx + wz],
            [-py * wy - wz, vz_over_pz + 2.0 * py * wx - px * wy],
        ])
        pb_bias = -(b @ r_cb.T) * dt
        f[PB, BG] = pb_bias
        gmat[PB, 0:3] = pb_bias
    else:
        f[PB, PB] = np.eye(2)

    f[BG, BG] = np.eye(3)
    f[BA, BA] = np.eye(3)
    return f, gmat


class MeasurementTooOld(Exception):
    """Image measurement older than the history horizon; caller counts and drops."""


class DelayedKalmanFilter:
    """One filter per simulation run: predict at IMU rate, retro-correct late images."""

    def __init__(
        self,
        noise: NoiseConfig,
        r_cb: np.ndarray | None = None,
        g: float = 9.81,
        buffer_capacity: int = 64,
    ):
        self.noise = noise
        self.r_cb = CAMERA_FORWARD.copy() if r_cb is None else np.asarray(r_cb, dtype=float)
        self.g = g
        self.buffer = HistoryBuffer(buffer_capacity)
        self.state: FilterState | None = None
        self.corrections_applied = 0
        self.measurements_too_old = 0
        self.last_correction_t: float | None = None

    def initialize(self, state: FilterState) -> None:
        self.state = state

    def predict(self, state: FilterState, imu: ImuSample, dt: float) -> FilterState:
        """Mean + covariance prediction; quaternion renormalized afterwards."""
        if dt <= 0.0:
            raise ValueError("predict: dt must be positive")
        x = state.x
        p_zc = depth_in_camera(x, self.r_cb)
        # Freeze the image rows when the target is behind the camera, at
        # point-blank depth, or the image point has left any plausible frame;
        # measurements still correct the frozen value (reacquisition).
        frozen = p_zc if (p_zc > DEPTH_FLOOR and float(np.max(np.abs(x[PB]))) < P_BAR_MAX) else None
        x_next = propagate_mean(x, imu, dt, self.g, self.r_cb, frozen)
        f, gmat = transition_jacobians(x, imu, dt, self.g, self.r_cb, frozen)
        p_next = f @ state.p @ f.T + gmat @ self.noise.q @ gmat.T
        p_next = 0.5 * (p_next + p_next.T)
        x_next[Q] /= np.linalg.norm(x_next[Q])
        return FilterState(x_next, p_next, image_valid=frozen is not None)

    def _kf_update(self, x: np.ndarray, p: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = p[PB, PB] + self.noise.r_img
        k = p[:, PB] @ np.linalg.inv(s)
        x_new = x + k @ (z - x[PB])
        p_new = p - k @ p[PB, :]
        p_new = 0.5 * (p_new + p_new.T)
        x_new[Q] /= np.linalg.norm(x_new[Q])
        return x_new, p_new

    def attitude_update(self, state: FilterState, q_meas: np.ndarray, sigma: float) -> FilterState:
        """Current-time attitude pseudo-measurement from the autopilot feed.

        The flight stack publishes its own attitude solution alongside the IMU;
        folding it in keeps the filter's quaternion from dead-reckoning drift.
        Sign-aligned to the estimate (q and -q are the same rotation).
        """
        q_z = q_meas if float(np.dot(q_meas, state.x[Q])) >= 0.0 else -q_meas
        s = state.p[Q, Q] + np.eye(4) * sigma * sigma
        k = state.p[:, Q] @ np.linalg.inv(s)
        x_new = state.x + k @ (q_z - state.x[Q])
        p_new = state.p - k @ state.p[Q, :]
        p_new = 0.5 * (p_new + p_new.T)
        x_new[Q] /= np.linalg.norm(x_new[Q])
        return FilterState(x_new, p_new, state.image_valid)

    def range_update(self, state: FilterState, range_meas: float, sigma: float) -> FilterState:
        """Coarse range pseudo-measurement h(x) = |p_r| (optional aiding mode).

        Bearing-only geometry leaves the range weakly observable whenever the
        own-motion baseline is poor; this scalar update pins it when a range
        source is configured.
        """
        r_hat = float(np.linalg.norm(state.x[PR]))
        if r_hat < 1e-6:
            return state
        h_row = np.zeros(18)
        h_row[PR] = state.x[PR] / r_hat
        s = float(h_row @ state.p @ h_row) + sigma * sigma
        k = (state.p @ h_row) / s
        x_new = state.x + k * (range_meas - r_hat)
        p_new = state.p - np.outer(k, h_row @ state.p)
        p_new = 0.5 * (p_new + p_new.T)
        x_new[Q] /= np.linalg.norm(x_new[Q])
        return FilterState(x_new, p_new, state.image_valid)

    def correct_delayed(self, z: ImageMeasurement, dt: float) -> None:
        """Correct the stored prior at the capture tick, then replay to now.

        Raises MeasurementTooOld when the capture tick has left the buffer;
        the caller decides whether that aborts anything (it is counted here).
        """
        idx = self.buffer.index_of(z.capture_tick)
        if idx is None:
            self.measurements_too_old += 1
            raise MeasurementTooOld(f"capture tick {z.capture_tick} not in buffer")
        rec = self.buffer[idx]
        x, p = self._kf_update(rec.prior_x, rec.prior_p, z.p_bar)
        state = FilterState(x, p)
        for j in range(idx + 1, len(self.buffer)):
            later = self.buffer[j]
            state = self.predict(state, later.imu, dt)
            if later.q_aid is not None:
                state = self.attitude_update(state, later.q_aid, later.q_aid_sigma)
            if later.r_aid is not None:
                state = self.range_update(state, later.r_aid, later.r_aid_sigma)
            later.prior_x = state.x.copy()
            later.prior_p = state.p.copy()
        self.state = state
        self.corrections_applied += 1
        self.last_correction_t = z.t_capture + (len(self.buffer) - 1 - idx) * dt

    def dkf_step(
        self,
        tick: int,
        t: float,
        imu: ImuSample,
        measurements: list[ImageMeasurement],
        dt: float,
        q_aid: np.ndarray | None = None,
        q_aid_sigma: float = 0.003,
        r_aid: float | None = None,
        r_aid_sigma: float = 1.0,
    ) -> FilterState:
        """One IMU tick: predict, optionally fold in current-time aiding
        (autopilot attitude, coarse range), record the prior, then apply any
        arrived delayed images.

        Aiding happens before the prior is recorded, so delayed retro-
        corrections replay over aided priors and stay rerun-exact.
        """
        if self.state is None:
            raise RuntimeError("dkf_step: filter not initialized")
        self.state = self.predict(self.state, imu, dt)
        if q_aid is not None:
            self.state = self.attitude_update(self.state, q_aid, q_aid_sigma)
        if r_aid is not None:
            self.state = self.range_update(self.state, r_aid, r_aid_sigma)
        self.buffer.append(
            BufferRecord(
                tick=tick, t=t, imu=imu,
                prior_x=self.state.x.copy(), prior_p=self.state.p.copy(),
                q_aid=None if q_aid is None else np.asarray(q_aid, dtype=float).copy(),
                q_aid_sigma=q_aid_sigma,
                r_aid=r_aid,
                r_aid_sigma=r_aid_sigma,
            )
        )
        for z in measurements:
            try:
                self.correct_delayed(z, dt)
            except MeasurementTooOld:
                pass
        return self.state


def bearing_initial_state(
    rot_true: np.ndarray,
    bearing: np.ndarray,
    range_guess: float,
    rng,
    att_sigma: float = 0.01,
    r_cb: np.ndarray | None = None,
    v_r0: np.ndarray | None = None,
    sigma_range_frac: float = 0.4,
    sigma_cross_frac: float = 0.02,
    sigma_v: float = 2.0,
    sigma_pb: float = 0.01,
    sigma_bg0: float = 0.01,
    sigma_ba0: float = 0.1,
) -> FilterState:
    """Initial filter state from the true attitude and a bearing at a guessed range.

    The attitude gets a small random perturbation; p_r points down the bearing
    at `range_guess`; v_r starts at the autopilot's own velocity (target motion
    unknown) when given; the position covariance is bearing-aligned (large
    along range, small across). Initialization is a library choice surfaced
    through the scenario config.
    """
    r_cb = CAMERA_FORWARD.copy() if r_cb is None else np.asarray(r_cb, dtype=float)
    perturb = exp_so3_vec(att_sigma * rng.normal(size=3))
    q0 = rotmat_to_quat(rot_true @ perturb)
    p_r0 = -range_guess * bearing
    x = np.zeros(18)
    x[Q] = q0
    x[PR] = p_r0
    if v_r0 is not None:
        x[VR] = np.asarray(v_r0, dtype=float)
    x_c = r_cb.T @ (quat_to_rotmat(q0).T @ (range_guess * bearing))
    if x_c[2] <= 0.0:
        raise ValueError("bearing_initial_state: bearing is behind the camera")
    x[PB] = x_c[:2] / x_c[2]

    n_hat = bearing / np.linalg.norm(bearing)
    along = np.outer(n_hat, n_hat)
    p_pos = (sigma_range_frac * range_guess) ** 2 * along + (
        sigma_cross_frac * range_guess
    ) ** 2 * (np.eye(3) - along)
    p = np.zeros((18, 18))
    p[Q, Q] = np.eye(4) * (0.5 * max(att_sigma, 1e-4)) ** 2
    p[PR, PR] = p_pos
    p[VR, VR] = np.eye(3) * sigma_v ** 2
    p[PB, PB] = np.eye(2) * sigma_pb ** 2
    p[BG, BG] = np.eye(3) * sigma_bg0 ** 2
    p[BA, BA] = np.eye(3) * sigma_ba0 ** 2
    return FilterState(x, p)
