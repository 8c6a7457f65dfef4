"""Frozen scenario presets used by the acceptance suite and the CLI.

Each builder returns a fully-populated Scenario. The engagement geometries and
gains are desk-scale calibrations: the delay-compensation comparison uses a
fast entry dash where the airframe rotates while bearings age; the observer
rate sweep and the moving-target run chase a circling target; the high-speed
run is a committed dive with the camera mounted near the thrust axis; the
stability suite samples admissible-cone geometries with the velocity started
on the pursuit manifold.
"""

from __future__ import annotations

import numpy as np

from . import so3
from .controller import ControllerConfig, desired_accel, desired_attitude, desired_thrust_dir
from .dynamics import InterceptorParams, TargetProfile
from .observer import NoiseConfig
from .sensing import CameraModel, ImuModel, los_vector, pitched_camera_mount
from .simulate import ObserverInitConfig, Scenario

YAW_180 = np.array([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]])


def static_dkf_scenario(dkf_enabled: bool = True, observer_rate: float = 50.0) -> Scenario:
    """Static target, 80 ms delay, 30 Hz imaging: the DKF-vs-direct comparison.

    Fast 5 m/s entry toward a target 16.8 m out and 5 m below; the vehicle
    pitches hard through the approach, so raw delayed bearings rotate with the
    body while the compensated estimate does not.
    """
    p0 = np.array([0.0, 0.0, -10.0])
    tgt = np.array([16.0, 0.0, -5.0])
    r_cb = pitched_camera_mount(0.0)
    return Scenario(
        interceptor=InterceptorParams(tau_omega=0.03),
        initial_p=p0,
        initial_v=np.array([5.0, 0.0, -1.0]),
        target_profile=TargetProfile(kind="static"),
        target_initial_p=tgt,
        camera=CameraModel(r_cb=r_cb, t_d=0.08, frame_rate=30.0, sigma_img=0.002, p_drop=0.05),
        imu=ImuModel(),
        controller=ControllerConfig(k1=0.8, k2=2.0, k_b=0.6, omega_m=4.0, n_td_body=r_cb[:, 2].copy()),
        observer_init=ObserverInitConfig(
            range_guess=float(np.linalg.norm(tgt - p0)) * 1.05, sigma_v=1.0
        ),
        feedback="observer",
        dkf_enabled=dkf_enabled,
        observer_rate=observer_rate,
        duration_max=9.0,
        terminate_on_contact=False,
        contact_radius=0.25,
        log_trajectory=False,
        name=f"static-{'dkf%d' % int(observer_rate) if dkf_enabled else 'direct'}",
    )


def rate_sweep_scenario(observer_rate: float) -> Scenario:
    """Circling-target engagement for the observer-rate sweep.

    The LOS slews continuously, so holding stale published estimates degrades
    the outer loop monotonically as the observer rate drops.
    """
    r_cb = pitched_camera_mount(np.radians(18.0))
    center = np.array([0.0, 0.0, -9.0])
    radius = 20.0
    phase0 = np.pi / 2
    tgt0 = center + radius * np.array([np.cos(phase0), np.sin(phase0), 0.0])
    return Scenario(
        interceptor=InterceptorParams(tau_omega=0.03),
        initial_p=np.array([-22.0, 23.0, -10.0]),
        initial_v=np.array([2.0, 0.0, 0.0]),
        target_profile=TargetProfile(kind="circular", center=center, radius=radius, speed=6.0, phase0=phase0),
        target_initial_p=tgt0,
        camera=CameraModel(r_cb=r_cb, t_d=0.08, frame_rate=30.0, sigma_img=0.002, p_drop=0.05),
        imu=ImuModel(),
        noise=NoiseConfig(q=np.diag([0.005 ** 2] * 3 + [2.0 ** 2] * 3), r_img=np.eye(2) * 0.002 ** 2),
        controller=ControllerConfig(k1=0.9, k2=2.5, k_b=0.5, omega_m=8.0, n_td_body=r_cb[:, 2].copy()),
        observer_init=ObserverInitConfig(range_guess=31.0, sigma_v=7.0),
        feedback="observer",
        dkf_enabled=True,
        observer_rate=observer_rate,
        duration_max=15.0,
        terminate_on_contact=True,
        flyby_margin=np.inf,
        contact_radius=0.7,
        track_loss_timeout=3.0,
        log_trajectory=False,
        name=f"rate-sweep-{int(observer_rate)}Hz",
    )


def circular_chase_scenario(dkf_enabled: bool = True, observer_rate: float = 50.0) -> Scenario:
    """Moving-target robustness run: stern chase of a 6 m/s circling target.

    The interceptor starts on the target's tail (vectoring handoff), acquires
    for half a second, then overtakes. Coarse range aiding is enabled (the
    bearing-only range is weakly observable along the chase axis) and the
    contact radius is the balloon-plus-airframe envelope.
    """
    r_cb = pitched_camera_mount(np.radians(18.0))
    center = np.array([0.0, 0.0, -9.0])
    radius = 40.0
    phase0 = np.pi / 2
    tgt0 = center + radius * np.array([np.cos(phase0), np.sin(phase0), 0.0])
    p0 = np.array([10.0, radius, -8.0])
    return Scenario(
        interceptor=InterceptorParams(tau_omega=0.03),
        initial_p=p0,
        initial_v=np.zeros(3),
        initial_rot=YAW_180.copy(),
        target_profile=TargetProfile(kind="circular", center=center, radius=radius, speed=6.0, phase0=phase0),
        target_initial_p=tgt0,
        camera=CameraModel(r_cb=r_cb, t_d=0.08, frame_rate=30.0, sigma_img=0.002, p_drop=0.05),
        imu=ImuModel(),
        noise=NoiseConfig(q=np.diag([0.005 ** 2] * 3 + [1.5 ** 2] * 3), r_img=np.eye(2) * 0.002 ** 2),
        controller=ControllerConfig(k1=0.9, k2=2.5, k_b=0.6, omega_m=8.0, n_td_body=r_cb[:, 2].copy()),
        observer_init=ObserverInitConfig(
            range_guess=float(np.linalg.norm(tgt0 - p0)),
            sigma_v=7.0,
            range_aiding=True,
            range_aid_sigma=1.0,
        ),
        feedback="observer",
        dkf_enabled=dkf_enabled,
        observer_rate=observer_rate,
        duration_max=20.0,
        terminate_on_contact=True,
        flyby_margin=np.inf,
        contact_radius=0.7,
        engage_delay=0.5,
        track_loss_timeout=5.0,
        log_trajectory=False,
        name="circular-chase",
    )


def high_speed_scenario() -> Scenario:
    """Noise-free 60 m committed dive at thrust-to-weight 3.

    The camera is mounted near the thrust axis (the designed LOS approximates
    the force direction for maximum interception speed) and the run starts
    pre-tilted onto the initial demand, so the saturated dash keeps the target
    in frame all the way to a 20+ m/s contact.
    """
    r_cb = pitched_camera_mount(np.radians(80.0))
    cfg = ControllerConfig(k1=2.0, k2=2.2, k_b=0.8, omega_m=8.0, n_td_body=r_cb[:, 2].copy())
    p0 = np.array([0.0, 0.0, -25.0])
    tgt = np.array([55.0, 0.0, -3.0])
    v0 = np.zeros(3)
    p_r0 = p0 - tgt
    n_t0 = los_vector(p_r0)
    a_d0 = desired_accel(p_r0, v0, n_t0, n_t0, cfg)
    n_fd0 = desired_thrust_dir(a_d0, v0, np.eye(3), cfg)
    rot0 = desired_attitude(np.array([0.0, 0.0, -1.0]), n_fd0, np.eye(3))
    return Scenario(
        interceptor=InterceptorParams(tau_omega=0.03),
        initial_p=p0,
        initial_v=v0,
        initial_rot=rot0,
        target_profile=TargetProfile(kind="static"),
        target_initial_p=tgt,
        camera=CameraModel(r_cb=r_cb, t_d=0.0, frame_rate=200.0, sigma_img=0.0, p_drop=0.0),
        imu=ImuModel(sigma_gyr=0.0, sigma_acc=0.0, sigma_b_gyr=0.0, sigma_b_acc=0.0),
        controller=cfg,
        feedback="truth",
        duration_max=12.0,
        terminate_on_contact=True,
        contact_radius=0.25,
        log_trajectory=True,
        name="high-speed-dive",
    )


def lyapunov_scenario(n_t0_body_angle: float, axis: np.ndarray, rge: float) -> Scenario:
    """One noise-free, delay-free stability-suite geometry.

    The initial LOS is the mount axis rotated by `n_t0_body_angle` about
    `axis`; the initial velocity sits on the pursuit manifold (z2 = 0), which
    is the regime the barrier-Lyapunov monotonicity argument covers.
    """
    r_cb = pitched_camera_mount(np.radians(20.0))
    n_td_body = r_cb[:, 2].copy()
    k1 = 0.3
    n_t0 = so3.exp_so3(axis / np.linalg.norm(axis), n_t0_body_angle) @ n_td_body
    p0 = np.array([0.0, 0.0, -10.0])
    p_r0 = -rge * n_t0
    return Scenario(
        interceptor=InterceptorParams(tau_omega=0.02),
        initial_p=p0,
        initial_v=-k1 * p_r0,
        target_profile=TargetProfile(kind="static"),
        target_initial_p=p0 + rge * n_t0,
        camera=CameraModel(r_cb=r_cb, t_d=0.0, frame_rate=200.0, sigma_img=0.0, p_drop=0.0),
        imu=ImuModel(sigma_gyr=0.0, sigma_acc=0.0, sigma_b_gyr=0.0, sigma_b_acc=0.0),
        controller=ControllerConfig(k1=k1, k2=1.0, k_b=0.6, omega_m=6.0, n_td_body=n_td_body),
        feedback="truth",
        duration_max=15.0,
        terminate_on_contact=True,
        contact_radius=0.25,
        log_trajectory=True,
        name="lyapunov-case",
    )


def lyapunov_cases(n: int = 20, seed: int = 7) -> list[Scenario]:
    """Deterministic sample of admissible-cone initial geometries."""
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(n):
        ang = rng.uniform(0.05, 0.52)
        axis = rng.normal(size=3)
        rge = rng.uniform(7.0, 12.0)
        cases.append(lyapunov_scenario(ang, axis, rge))
    return cases
