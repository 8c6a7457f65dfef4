"""Camera/LOS geometry, IMU simulation, and the delayed image pipeline.

Image coordinates are normalized (focal length 1) everywhere inside the
library; pixel scaling only matters for logs. The imaging delay is quantized
to whole IMU cycles, ``D = round(t_d * imu_rate)``, and the pipeline emits a
captured frame exactly D ticks after capture unless it was dropped.

The canonical strapdown mount ``CAMERA_FORWARD`` looks along body x with
image x to the right (body y) and image y down (body z).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

# camera->body: x_c -> y_b, y_c -> z_b, z_c (optical axis) -> x_b
CAMERA_FORWARD = np.array([
    [0.0, 0.0, 1.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
])


def pitched_camera_mount(pitch_up: float) -> np.ndarray:
    """Forward mount with the optical axis pitched up by `pitch_up` rad.

    pitch_up = 0 reproduces CAMERA_FORWARD; positive angles raise the axis
    toward -z_b (up in NED) while image x stays along body y.
    """
    c, s = np.cos(pitch_up), np.sin(pitch_up)
    return np.array([
        [0.0, s, c],
        [1.0, 0.0, 0.0],
        [0.0, c, -s],
    ])

MIN_RANGE = 1e-6  # m, below this the LOS direction is undefined


@dataclass
class CameraModel:
    f_oc: float = 1.0                   # focal length in normalized units
    alpha_hfov: float = np.radians(120.0)
    alpha_vfov: float = np.radians(90.0)
    r_cb: np.ndarray = field(default_factory=lambda: CAMERA_FORWARD.copy())
    frame_rate: float = 30.0            # Hz
    t_d: float = 0.08                   # s, imaging + processing delay
    sigma_img: float = 0.002            # normalized-coordinate noise std
    p_drop: float = 0.05                # frame dropout probability
    f_oc_pixels: float = 1000.0         # log scaling only

    def __post_init__(self):
        self.r_cb = np.asarray(self.r_cb, dtype=float)
        if not (0.0 < self.alpha_hfov < np.pi and 0.0 < self.alpha_vfov < np.pi):
            raise ValueError("CameraModel: FOV angles must be in (0, pi)")
        if self.t_d < 0.0 or self.frame_rate <= 0.0:
            raise ValueError("CameraModel: t_d must be >= 0, frame_rate > 0")
        if not (0.0 <= self.p_drop <= 1.0):
            raise ValueError("CameraModel: p_drop must be in [0, 1]")


@dataclass
class ImuModel:
    rate: float = 200.0      # Hz
    sigma_gyr: float = 0.005     # rad/s per sample
    sigma_acc: float = 0.05      # m/s^2 per sample
    sigma_b_gyr: float = 1e-4    # rad/s/sqrt(s) bias random walk
    sigma_b_acc: float = 1e-4    # m/s^2/sqrt(s) bias random walk

    def __post_init__(self):
        if self.rate <= 0.0:
            raise ValueError("ImuModel: rate must be positive")
        for s in (self.sigma_gyr, self.sigma_acc, self.sigma_b_gyr, self.sigma_b_acc):
            if s < 0.0:
                raise ValueError("ImuModel: noise stds must be >= 0")


@dataclass
class ImuSample:
    t: float
    omega_meas: np.ndarray   # rad/s, BCS
    a_meas: np.ndarray       # m/s^2, specific force in BCS


@dataclass
class ImageMeasurement:
    t_capture: float
    t_available: float
    p_bar: np.ndarray        # normalized image coordinates
    capture_tick: int = 0


def los_vector(p_r: np.ndarray) -> np.ndarray:
    """Unit LOS from interceptor to target: -p_r / |p_r|."""
    r = float(np.linalg.norm(p_r))
    if r <= MIN_RANGE:
        raise ValueError("los_vector: relative range is numerically zero")
    return -p_r / r


def in_fov(x_c: np.ndarray, cam: CameraModel) -> bool:
    """FOV membership: target in front and inside both half-angle cones."""
    if x_c[2] <= 0.0:
        return False
    return (
        abs(np.arctan2(x_c[0], x_c[2])) <= 0.5 * cam.alpha_hfov
        and abs(np.arctan2(x_c[1], x_c[2])) <= 0.5 * cam.alpha_vfov
    )


def project_to_image(p_r: np.ndarray, rot_be: np.ndarray, cam: CameraModel) -> np.ndarray | None:
    """Normalized image point of the target, or None when out of view."""
    x_c = cam.r_cb.T @ (rot_be.T @ (-np.asarray(p_r, dtype=float)))
    if not in_fov(x_c, cam):
        return None
    return np.array([x_c[0] / x_c[2], x_c[1] / x_c[2]])


def bearing_from_image(p_bar: np.ndarray, rot_be: np.ndarray, r_cb: np.ndarray) -> np.ndarray:
    """Earth-frame unit LOS reconstructed from a normalized image point."""
    ray = np.array([p_bar[0], p_bar[1], 1.0])
    return rot_be @ (r_cb @ (ray / np.linalg.norm(ray)))


def image_jacobian(p_bar: np.ndarray, p_zc: float) -> np.ndarray:
    """2x6 interaction matrix mapping camera twist [v; w] (CCS) to d(p_bar)/dt."""
    if p_zc <= 0.0:
        raise ValueError("image_jacobian: depth must be positive")
    x, y = float(p_bar[0]), float(p_bar[1])
    iz = 1.0 / p_zc
    return np.array([
        [-iz, 0.0, x * iz, x * y, -(1.0 + x * x), y],
        [0.0, -iz, y * iz, 1.0 + y * y, -x * y, -x],
    ])


def imu_sample(
    true_omega: np.ndarray,
    true_specific_force: np.ndarray,
    b_gyr: np.ndarray,
    b_acc: np.ndarray,
    model: ImuModel,
    rng,
    t: float,
) -> tuple[ImuSample, np.ndarray, np.ndarray]:
    """Noisy IMU sample plus the bias states advanced one random-walk step.

    Draw order is fixed (gyro noise, accel noise, gyro walk, accel walk) so
    paired Monte Carlo arms consume identical streams.
    """
    dt = 1.0 / model.rate
    n_gyr = rng.normal(size=3) * model.sigma_gyr
    n_acc = rng.normal(size=3) * model.sigma_acc
    w_gyr = rng.normal(size=3) * (model.sigma_b_gyr * np.sqrt(dt))
    w_acc = rng.normal(size=3) * (model.sigma_b_acc * np.sqrt(dt))
    sample = ImuSample(
        t=t,
        omega_meas=true_omega + b_gyr + n_gyr,
        a_meas=true_specific_force + b_acc + n_acc,
    )
    return sample, b_gyr + w_gyr, b_acc + w_acc


class ImagePipeline:
    """Frame-rate capture queue with quantized delay and dropout.

    Called once per IMU tick. At frame instants it always consumes one
    dropout draw and one noise draw (common random numbers across paired
    arms), captures the frame unless dropped or out of view, and emits any
    queued measurement whose availability time has arrived.
    """

    def __init__(self, cam: CameraModel, imu_rate: float):
        self.cam = cam
        self.dt = 1.0 / imu_rate
        self.delay_ticks = int(round(cam.t_d * imu_rate))
        self.frame_interval = 1.0 / cam.frame_rate
        self.next_frame_time = 0.0
        self.queue: deque[ImageMeasurement] = deque()
        self.frames_captured = 0
        self.frames_dropped = 0
        self.frames_out_of_view = 0

    def step(self, truth_p_bar: np.ndarray | None, tick: int, t: float, rng) -> list[ImageMeasurement]:
        if t >= self.next_frame_time - 1e-9:
            self.next_frame_time += self.frame_interval
            u = rng.uniform()
            noise = rng.normal(size=2) * self.cam.sigma_img
            if truth_p_bar is None:
                self.frames_out_of_view += 1
            elif u < self.cam.p_drop:
                self.frames_dropped += 1
            else:
                self.frames_captured += 1
                self.queue.append(
                    ImageMeasurement(
                        t_capture=t,
                        t_available=t + self.delay_ticks * self.dt,
                        p_bar=truth_p_bar + noise,
                        capture_tick=tick,
                    )
                )
        out = []
        while self.queue and self.queue[0].t_available <= t + 1e-9:
            out.append(self.queue.popleft())
        return out
