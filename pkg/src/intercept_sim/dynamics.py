"""Ground-truth plant models: interceptor rigid body and scripted target.

Frame convention is NED (z down), gravity +9.81 along +z_e. The propellers
push along the negative body-z axis, so the earth-frame thrust direction is
``n_f = -R @ R_f @ e3`` and level hover needs ``f = m * g``.

Moment-level rate dynamics (inertia, gyroscopic and propeller moments) are
replaced by a first-order body-rate lag with time constant ``tau_omega``: the
controller commands a body rate, the autopilot rate loop is not modeled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import so3


@dataclass
class InterceptorParams:
    m: float = 1.0                  # kg
    g: float = 9.81                 # m/s^2, along +z_e (down)
    f_m: float = 29.43              # N, max thrust (default: thrust-to-weight 3)
    drag: np.ndarray = field(default_factory=lambda: np.array([0.10, 0.10, 0.05]))  # N*s/m, diag of D
    r_f: np.ndarray = field(default_factory=lambda: np.eye(3))  # thrust-axis mount rotation
    tau_omega: float = 0.05         # s, body-rate lag time constant

    def __post_init__(self):
        self.drag = np.asarray(self.drag, dtype=float)
        self.r_f = np.asarray(self.r_f, dtype=float)
        if self.m <= 0.0 or self.f_m <= 0.0 or self.tau_omega <= 0.0:
            raise ValueError("InterceptorParams: m, f_m, tau_omega must be positive")
        if np.any(self.drag < 0.0):
            raise ValueError("InterceptorParams: drag coefficients must be >= 0")

    @property
    def gravity(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.g])


@dataclass
class InterceptorState:
    p: np.ndarray       # m, EFCS
    v: np.ndarray       # m/s, EFCS
    rot: np.ndarray     # body->earth
    omega: np.ndarray   # rad/s, BCS

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.rot = np.asarray(self.rot, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)


@dataclass
class TargetState:
    p_t: np.ndarray
    v_t: np.ndarray
    a_t: np.ndarray

    def __post_init__(self):
        self.p_t = np.asarray(self.p_t, dtype=float)
        self.v_t = np.asarray(self.v_t, dtype=float)
        self.a_t = np.asarray(self.a_t, dtype=float)


@dataclass
class TargetProfile:
    """Scripted target motion.

    kind: "static" | "constant_velocity" | "circular" | "waypoint_list"
      static:            holds the initial position
      constant_velocity: velocity given (m/s)
      circular:          horizontal circle (center, radius, speed, phase0)
      waypoint_list:     piecewise-linear path through waypoints at speed
    """

    kind: str = "static"
    velocity: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float = 0.0
    speed: float = 0.0
    phase0: float = 0.0
    waypoints: list | None = None

    def __post_init__(self):
        if self.kind not in ("static", "constant_velocity", "circular", "waypoint_list"):
            raise ValueError(f"TargetProfile: unknown kind {self.kind!r}")
        if self.velocity is not None:
            self.velocity = np.asarray(self.velocity, dtype=float)
        if self.center is not None:
            self.center = np.asarray(self.center, dtype=float)
        if self.kind == "circular":
            if self.radius <= 0.0 or self.speed < 0.0 or self.center is None:
                raise ValueError("TargetProfile circular: needs center, radius > 0, speed >= 0")
        if self.kind == "constant_velocity" and self.velocity is None:
            raise ValueError("TargetProfile constant_velocity: needs velocity")
        if self.kind == "waypoint_list":
            if not self.waypoints or self.speed <= 0.0:
                raise ValueError("TargetProfile waypoint_list: needs waypoints and speed > 0")
            self.waypoints = [np.asarray(w, dtype=float) for w in self.waypoints]


def thrust_axis(rot: np.ndarray, r_f: np.ndarray) -> np.ndarray:
    """Earth-frame unit thrust direction (propellers push along -z_b)."""
    return -(rot @ r_f[:, 2])


def drag_force(rot: np.ndarray, drag_diag: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotor drag -R D R^T v in EFCS."""
    return -(rot @ (drag_diag * (rot.T @ v)))


def specific_force_body(state: InterceptorState, params: InterceptorParams, f: float) -> np.ndarray:
    """Accelerometer truth: (thrust + drag)/m in BCS, gravity excluded."""
    f_tot = f * thrust_axis(state.rot, params.r_f) + drag_force(state.rot, params.drag, state.v)
    return state.rot.T @ f_tot / params.m


def step_interceptor(
    state: InterceptorState,
    params: InterceptorParams,
    f_cmd: float,
    omega_cmd: np.ndarray,
    dt: float,
) -> InterceptorState:
    """Advance the rigid body one step.

    Translation integrates by RK4 with the attitude evaluated at stage times,
    attitude by the exact exponential over the step-mean body rate, and the
    rate lag by its exact first-order discretization. For constant commanded
    rate the stage attitudes are exact and the translational order is 4.
    """
    if not (0.0 < dt <= 0.02):
        raise ValueError("step_interceptor: dt must be in (0, 0.02]")
    if not np.isfinite(f_cmd) or not np.all(np.isfinite(omega_cmd)):
        raise ValueError("step_interceptor: non-finite command")
    f = min(max(f_cmd, 0.0), params.f_m)

    # Exact lag: omega(s) = cmd + (omega0 - cmd) exp(-s/tau); use its step mean
    # as the attitude increment rate.
    alpha = np.exp(-dt / params.tau_omega)
    omega_next = omega_cmd + (state.omega - omega_cmd) * alpha
    mean_w = (params.tau_omega / dt) * (1.0 - alpha)
    omega_bar = omega_cmd + (state.omega - omega_cmd) * mean_w

    rot0 = state.rot
    rot_half = rot0 @ so3.exp_so3_vec(omega_bar * (0.5 * dt))
    rot_full = rot0 @ so3.exp_so3_vec(omega_bar * dt)

    g_vec = params.gravity
    inv_m = 1.0 / params.m

    def accel(rot, v):
        return g_vec + (f * thrust_axis(rot, params.r_f) + drag_force(rot, params.drag, v)) * inv_m

    p0, v0 = state.p, state.v
    k1v = accel(rot0, v0)
    k1p = v0
    k2v = accel(rot_half, v0 + 0.5 * dt * k1v)
    k2p = v0 + 0.5 * dt * k1v
    k3v = accel(rot_half, v0 + 0.5 * dt * k2v)
    k3p = v0 + 0.5 * dt * k2v
    k4v = accel(rot_full, v0 + dt * k3v)
    k4p = v0 + dt * k3v

    p1 = p0 + (dt / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    v1 = v0 + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return InterceptorState(p=p1, v=v1, rot=rot_full, omega=omega_next)


def target_state_at(profile: TargetProfile, initial: TargetState, time: float) -> TargetState:
    """Closed-form target state at absolute time for analytic profiles."""
    if profile.kind == "static":
        return TargetState(initial.p_t.copy(), np.zeros(3), np.zeros(3))
    if profile.kind == "constant_velocity":
        return TargetState(initial.p_t + profile.velocity * time, profile.velocity.copy(), np.zeros(3))
    if profile.kind == "circular":
        w = profile.speed / profile.radius
        th = profile.phase0 + w * time
        c, s = np.cos(th), np.sin(th)
        p = profile.center + profile.radius * np.array([c, s, 0.0])
        v = profile.speed * np.array([-s, c, 0.0])
        a = -(profile.speed * w) * np.array([c, s, 0.0])
        return TargetState(p, v, a)
    # waypoint_list: constant speed along the polyline, stop at the end.
    dist = profile.speed * time
    pts = profile.waypoints
    for a, b in zip(pts[:-1], pts[1:]):
        seg = b - a
        seg_len = float(np.linalg.norm(seg))
        if dist <= seg_len:
            direction = seg / seg_len
            return TargetState(a + direction * dist, profile.speed * direction, np.zeros(3))
        dist -= seg_len
    return TargetState(pts[-1].copy(), np.zeros(3), np.zeros(3))


def step_target(state: TargetState, profile: TargetProfile, initial: TargetState, time: float, dt: float) -> TargetState:
    """Target state at time + dt (profiles are closed-form, so this is exact)."""
    if dt <= 0.0:
        raise ValueError("step_target: dt must be positive")
    return target_state_at(profile, initial, time + dt)


def relative_state(i: InterceptorState, t: TargetState) -> tuple[np.ndarray, np.ndarray]:
    """(p_r, v_r) = (p - p_t, v - v_t) in EFCS."""
    return i.p - t.p_t, i.v - t.v_t
