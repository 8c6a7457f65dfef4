"""SO(3) visual-servoing interception controller.

Two coupled objectives: keep the target unit vector collinear with the
body-carried designed LOS (barrier-gained rate command ``w1``), and align the
relative velocity with the target unit vector (desired acceleration ``a_d``,
tilt-only desired attitude ``R_d``, rate command ``w2``, thrust ``f_d``).

The outer loop (``w1``, ``a_d``, ``R_d``) refreshes whenever a fresh image /
observer estimate arrives; the inner loop (``w2``, ``f_d``) runs every tick
from the cached outer quantities. Commands are saturated to ``omega_m`` and
``[0, f_m]`` on every tick.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import so3
from .dynamics import drag_force, thrust_axis
from .sensing import CAMERA_FORWARD, bearing_from_image

MIN_CONTROL_RANGE = 1e-3   # m, floor on |p_r| inside the acceleration law
MIN_THRUST_DIR = 1e-6      # degenerate thrust-direction threshold


class BarrierViolated(Exception):
    """Target left the admissible cone (z1 reached k_b); run must abort."""


@dataclass
class ControllerConfig:
    k1: float = 0.7
    k2: float = 2.0
    k_b: float = 0.6
    omega_m: float = 4.0        # rad/s
    f_m: float = 29.43          # N
    n_td_body: np.ndarray = field(default_factory=lambda: CAMERA_FORWARD[:, 2].copy())
    m: float = 1.0              # kg
    drag: np.ndarray = field(default_factory=lambda: np.array([0.10, 0.10, 0.05]))
    g: float = 9.81
    r_f: np.ndarray = field(default_factory=lambda: np.eye(3))
    outer_rate: float = 50.0    # Hz, image/observer-driven loop
    inner_rate: float = 200.0   # Hz

    def __post_init__(self):
        self.n_td_body = np.asarray(self.n_td_body, dtype=float)
        self.drag = np.asarray(self.drag, dtype=float)
        self.r_f = np.asarray(self.r_f, dtype=float)
        for name in ("k1", "k2", "k_b", "omega_m", "f_m"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"ControllerConfig: {name} must be positive")
        if not (0.0 < self.k_b < 2.0):
            raise ValueError("ControllerConfig: k_b must be in (0, 2)")
        if abs(np.linalg.norm(self.n_td_body) - 1.0) > 1e-9:
            raise ValueError("ControllerConfig: n_td_body must be a unit vector")

    @property
    def gravity(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.g])


@dataclass
class ControllerCommand:
    f_d: float
    omega_d: np.ndarray


@dataclass
class ControllerInputs:
    p_bar: np.ndarray        # estimated normalized image point
    p_r_hat: np.ndarray      # estimated relative position, EFCS
    v_r_hat: np.ndarray      # estimated relative velocity, EFCS
    v: np.ndarray            # own velocity (autopilot feed), EFCS
    rot: np.ndarray          # attitude body->earth (autopilot feed)
    image_fresh: bool


def barrier_gain(z1: float, k_b: float) -> float:
    """z1 / (k_b^2 - z1^2): blows up as the LOS error approaches the barrier."""
    return z1 / (k_b * k_b - z1 * z1)


def collinear_rate_cmd(n_td: np.ndarray, n_t: np.ndarray, rot: np.ndarray, k_b: float) -> np.ndarray:
    """Body rate that turns the designed LOS toward the target unit vector."""
    z1 = 1.0 - float(np.dot(n_td, n_t))
    if abs(z1) >= k_b:
        raise BarrierViolated(f"LOS error z1={z1:.4f} reached the barrier k_b={k_b}")
    return barrier_gain(z1, k_b) * (rot.T @ np.cross(n_td, n_t))


def desired_accel(
    p_r: np.ndarray, v_r: np.ndarray, n_t: np.ndarray, n_td: np.ndarray, cfg: ControllerConfig
) -> np.ndarray:
    """Pursuit acceleration; target acceleration is treated as a disturbance."""
    if not (np.all(np.isfinite(p_r)) and np.all(np.isfinite(v_r))):
        raise ValueError("desired_accel: non-finite state")
    r = float(np.linalg.norm(p_r))
    if r <= MIN_CONTROL_RANGE:
        raise ValueError("desired_accel: relative range below control floor")
    z1 = 1.0 - float(np.dot(n_td, n_t))
    z2 = v_r + cfg.k1 * p_r
    barrier = barrier_gain(z1, cfg.k_b) * (cfg.m / r) * (np.dot(n_t, n_td) * n_t - n_td)
    return -cfg.k1 * v_r - cfg.k2 * z2 - p_r + barrier


def desired_thrust_dir(
    a_d: np.ndarray,
    v: np.ndarray,
    rot: np.ndarray,
    cfg: ControllerConfig,
    prev_n_fd: np.ndarray | None = None,
) -> np.ndarray:
    """Unit direction the thrust vector should take in EFCS."""
    raw = a_d - cfg.gravity - drag_force(rot, cfg.drag, v) / cfg.m
    n = float(np.linalg.norm(raw))
    if n <= MIN_THRUST_DIR:
        if prev_n_fd is not None:
            return prev_n_fd.copy()
        return thrust_axis(rot, cfg.r_f)
    return raw / n


def desired_attitude(n_f: np.ndarray, n_fd: np.ndarray, rot: np.ndarray) -> np.ndarray:
    """Tilt-only desired attitude: rotate about n_f x n_fd, preserving yaw."""
    cross = np.cross(n_f, n_fd)
    s = float(np.linalg.norm(cross))
    c = min(1.0, max(-1.0, float(np.dot(n_f, n_fd))))
    if s < 1e-12:
        if c > 0.0:
            return rot.copy()
        # Anti-parallel: rotate pi about the axis most orthogonal to n_f
        # (smallest-|component| basis vector, projected and normalized).
        i = int(np.argmin(np.abs(n_f)))
        e = np.zeros(3)
        e[i] = 1.0
        axis = e - np.dot(e, n_f) * n_f
        axis /= np.linalg.norm(axis)
        return so3.exp_so3(axis, np.pi) @ rot
    axis = cross / s
    phi = float(np.arctan2(s, c))
    return so3.exp_so3(axis, phi) @ rot


def thrust_cmd(a_d: np.ndarray, v: np.ndarray, rot: np.ndarray, cfg: ControllerConfig) -> float:
    """Thrust magnitude projected on the current thrust axis, clamped to [0, f_m]."""
    n_f = thrust_axis(rot, cfg.r_f)
    f = float(np.dot(n_f, cfg.m * a_d - cfg.m * cfg.gravity - drag_force(rot, cfg.drag, v)))
    return min(max(f, 0.0), cfg.f_m)


def attitude_rate_cmd(rot_d: np.ndarray, rot: np.ndarray) -> np.ndarray:
    """w2 = -vex(R_d^T R - R^T R_d); drives R toward R_d, zero at R = R_d."""
    e = rot_d.T @ rot
    return -so3.vex_unchecked(e - e.T)


class InterceptionController:
    """Stateful two-rate controller (Algorithm-1 structure).

    Owns the cached outer-loop quantities (a_d, R_d) between image updates.
    One instance per simulation run; helper functions above are pure.
    """

    def __init__(self, cfg: ControllerConfig, r_cb: np.ndarray | None = None):
        self.cfg = cfg
        self.r_cb = CAMERA_FORWARD.copy() if r_cb is None else np.asarray(r_cb, dtype=float)
        self.a_d = np.zeros(3)
        self.rot_d: np.ndarray | None = None
        self.prev_n_fd: np.ndarray | None = None

    def step(self, inputs: ControllerInputs) -> ControllerCommand:
        cfg = self.cfg
        rot = inputs.rot
        if self.rot_d is None:
            self.rot_d = rot.copy()

        # Inner loop from cached outer quantities.
        f_d = thrust_cmd(self.a_d, inputs.v, rot, cfg)
        w2 = attitude_rate_cmd(self.rot_d, rot)
        w1 = None

        if inputs.image_fresh:
            n_t = bearing_from_image(inputs.p_bar, rot, self.r_cb)
            n_td = rot @ cfg.n_td_body
            w1 = collinear_rate_cmd(n_td, n_t, rot, cfg.k_b)
            # The relative position the law acts on is rebuilt from the image
            # bearing at the estimated range: the image point is the one input
            # the vision pipeline owns, the estimate supplies the scale.
            p_r = -float(np.linalg.norm(inputs.p_r_hat)) * n_t
            self.a_d = desired_accel(p_r, inputs.v_r_hat, n_t, n_td, cfg)
            n_fd = desired_thrust_dir(self.a_d, inputs.v, rot, cfg, self.prev_n_fd)
            self.prev_n_fd = n_fd
            self.rot_d = desired_attitude(thrust_axis(rot, cfg.r_f), n_fd, rot)

        omega_d = so3.saturate(w2 if w1 is None else w1 + w2, cfg.omega_m)
        return ControllerCommand(f_d=f_d, omega_d=omega_d)


def lyapunov_total(
    p_r: np.ndarray,
    v_r: np.ndarray,
    n_t: np.ndarray,
    n_td: np.ndarray,
    rot: np.ndarray,
    rot_d: np.ndarray,
    cfg: ControllerConfig,
) -> float:
    """Total Lyapunov value: log barrier + position + velocity-error + attitude.

    Diverges as z1 -> k_b; used by the stability test suite to check
    non-increase between outer-loop updates.
    """
    z1 = 1.0 - float(np.dot(n_td, n_t))
    z2 = v_r + cfg.k1 * p_r
    l1 = 0.5 * np.log(cfg.k_b ** 2 / (cfg.k_b ** 2 - z1 ** 2))
    l2 = 0.5 * float(np.dot(p_r, p_r))
    lz = 0.5 * float(np.dot(z2, z2))
    l4 = float(np.trace(np.eye(3) - rot_d.T @ rot))
    return l1 + l2 + lz + l4
