"""JSON scenario configs: strict schema-1 validation and Scenario construction.

Unknown keys are rejected with the offending dotted path; missing required
keys name the field. All physical quantities are SI (angles in the config are
degrees only where the key says so). docs/formats.md is the reference.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .controller import ControllerConfig
from .dynamics import InterceptorParams, TargetProfile
from .observer import NoiseConfig
from .sensing import CameraModel, ImuModel, pitched_camera_mount
from .simulate import ObserverInitConfig, Scenario

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed scenario config; message names the offending key."""


def _require(section: dict, key: str, path: str):
    if key not in section:
        raise ConfigError(f"missing required field: {path}.{key}" if path else f"missing required field: {key}")
    return section[key]


def _check_keys(section: dict, allowed: set[str], path: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        name = sorted(unknown)[0]
        where = f"{path}.{name}" if path else name
        raise ConfigError(f"unknown field: {where}")


def _rot_from_rpy_deg(rpy) -> np.ndarray:
    roll, pitch, yaw = np.radians(np.asarray(rpy, dtype=float))
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1.0]])
    ry = np.array([[cp, 0, sp], [0, 1.0, 0], [-sp, 0, cp]])
    rx = np.array([[1.0, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return rz @ ry @ rx


def scenario_from_dict(doc: dict) -> Scenario:
    _check_keys(doc, {"schema", "name", "interceptor", "target", "camera", "imu",
                      "controller", "observer", "sim"}, "")
    schema = _require(doc, "schema", "")
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version: {schema} (expected {SCHEMA_VERSION})")

    # interceptor
    sec = doc.get("interceptor", {})
    _check_keys(sec, {"m", "g", "f_m", "drag", "tau_omega", "initial_p", "initial_v",
                      "initial_rpy_deg"}, "interceptor")
    params = InterceptorParams(
        m=float(sec.get("m", 1.0)),
        g=float(sec.get("g", 9.81)),
        f_m=float(sec.get("f_m", 29.43)),
        drag=np.asarray(sec.get("drag", [0.10, 0.10, 0.05]), dtype=float),
        tau_omega=float(sec.get("tau_omega", 0.05)),
    )
    initial_p = np.asarray(sec.get("initial_p", [0.0, 0.0, -10.0]), dtype=float)
    initial_v = np.asarray(sec.get("initial_v", [0.0, 0.0, 0.0]), dtype=float)
    initial_rot = _rot_from_rpy_deg(sec.get("initial_rpy_deg", [0.0, 0.0, 0.0]))

    # target
    sec = doc.get("target", {})
    _check_keys(sec, {"kind", "initial_p", "velocity", "center", "radius", "speed",
                      "phase0", "waypoints"}, "target")
    kind = _require(sec, "kind", "target")
    target_initial_p = np.asarray(_require(sec, "initial_p", "target"), dtype=float)
    try:
        profile = TargetProfile(
            kind=kind,
            velocity=sec.get("velocity"),
            center=sec.get("center"),
            radius=float(sec.get("radius", 0.0)),
            speed=float(sec.get("speed", 0.0)),
            phase0=float(sec.get("phase0", 0.0)),
            waypoints=sec.get("waypoints"),
        )
    except ValueError as e:
        raise ConfigError(f"target: {e}") from e

    # camera (t_d and frame_rate are the experimental knobs: required)
    sec = doc.get("camera", {})
    _check_keys(sec, {"t_d", "frame_rate", "alpha_hfov_deg", "alpha_vfov_deg",
                      "pitch_up_deg", "sigma_img", "p_drop", "f_oc_pixels"}, "camera")
    t_d = float(_require(sec, "t_d", "camera"))
    frame_rate = float(_require(sec, "frame_rate", "camera"))
    camera = CameraModel(
        alpha_hfov=np.radians(float(sec.get("alpha_hfov_deg", 120.0))),
        alpha_vfov=np.radians(float(sec.get("alpha_vfov_deg", 90.0))),
        r_cb=pitched_camera_mount(np.radians(float(sec.get("pitch_up_deg", 0.0)))),
        frame_rate=frame_rate,
        t_d=t_d,
        sigma_img=float(sec.get("sigma_img", 0.002)),
        p_drop=float(sec.get("p_drop", 0.05)),
        f_oc_pixels=float(sec.get("f_oc_pixels", 1000.0)),
    )

    # imu (rate required: it is the simulation clock)
    sec = doc.get("imu", {})
    _check_keys(sec, {"rate", "sigma_gyr", "sigma_acc", "sigma_b_gyr", "sigma_b_acc"}, "imu")
    imu = ImuModel(
        rate=float(_require(sec, "rate", "imu")),
        sigma_gyr=float(sec.get("sigma_gyr", 0.005)),
        sigma_acc=float(sec.get("sigma_acc", 0.05)),
        sigma_b_gyr=float(sec.get("sigma_b_gyr", 1e-4)),
        sigma_b_acc=float(sec.get("sigma_b_acc", 1e-4)),
    )

    # controller
    sec = doc.get("controller", {})
    _check_keys(sec, {"k1", "k2", "k_b", "omega_m", "outer_rate", "n_td_body"}, "controller")
    n_td_body = sec.get("n_td_body")
    controller = ControllerConfig(
        k1=float(sec.get("k1", 0.3)),
        k2=float(sec.get("k2", 1.0)),
        k_b=float(sec.get("k_b", 0.6)),
        omega_m=float(sec.get("omega_m", 6.0)),
        f_m=params.f_m,
        n_td_body=np.asarray(n_td_body, dtype=float) if n_td_body is not None else camera.r_cb[:, 2].copy(),
        m=params.m,
        drag=params.drag.copy(),
        g=params.g,
        outer_rate=float(sec.get("outer_rate", 50.0)),
        inner_rate=imu.rate,
    )

    # observer
    sec = doc.get("observer", {})
    _check_keys(sec, {"rate", "enabled", "range_guess", "range_from_truth", "att_sigma",
                      "v_from_autopilot", "range_aiding", "range_aid_sigma", "sigma_v",
                      "buffer_capacity", "sigma_gyr_model", "sigma_acc_model",
                      "sigma_img_model"}, "observer")
    sg = float(sec.get("sigma_gyr_model", imu.sigma_gyr))
    sa = float(sec.get("sigma_acc_model", imu.sigma_acc))
    sz = float(sec.get("sigma_img_model", camera.sigma_img))
    noise = NoiseConfig(
        q=np.diag([max(sg, 1e-5) ** 2] * 3 + [max(sa, 1e-4) ** 2] * 3),
        r_img=np.eye(2) * max(sz, 1e-5) ** 2,
    )
    observer_init = ObserverInitConfig(
        range_guess=float(sec.get("range_guess", 15.0)),
        range_from_truth=bool(sec.get("range_from_truth", False)),
        att_sigma=float(sec.get("att_sigma", 0.01)),
        v_from_autopilot=bool(sec.get("v_from_autopilot", True)),
        range_aiding=bool(sec.get("range_aiding", False)),
        range_aid_sigma=float(sec.get("range_aid_sigma", 1.0)),
        sigma_v=float(sec.get("sigma_v", 1.0)),
    )

    # sim
    sec = doc.get("sim", {})
    _check_keys(sec, {"duration_max", "contact_radius", "terminate_on_contact",
                      "feedback", "track_loss_timeout", "engage_delay", "flyby_margin"}, "sim")

    try:
        return Scenario(
            interceptor=params,
            initial_p=initial_p,
            initial_v=initial_v,
            initial_rot=initial_rot,
            target_profile=profile,
            target_initial_p=target_initial_p,
            camera=camera,
            imu=imu,
            controller=controller,
            noise=noise,
            observer_init=observer_init,
            duration_max=float(sec.get("duration_max", 12.0)),
            contact_radius=float(sec.get("contact_radius", 0.25)),
            terminate_on_contact=bool(sec.get("terminate_on_contact", True)),
            engage_delay=float(sec.get("engage_delay", 0.0)),
            flyby_margin=float(sec.get("flyby_margin", 1.0)),
            dkf_enabled=bool(doc.get("observer", {}).get("enabled", True)),
            observer_rate=float(doc.get("observer", {}).get("rate", 50.0)),
            feedback=str(sec.get("feedback", "observer")),
            track_loss_timeout=float(sec.get("track_loss_timeout", 2.0)),
            buffer_capacity=int(doc.get("observer", {}).get("buffer_capacity", 64)),
            name=str(doc.get("name", "")),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def load_scenario(path: str | Path) -> tuple[Scenario, dict]:
    """Parse a config file; returns (scenario, resolved-source dict)."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return scenario_from_dict(doc), doc
