"""Closed-loop visual-servoing interception simulator with a delayed Kalman filter."""

__version__ = "0.1.0"

from .controller import BarrierViolated, ControllerCommand, ControllerConfig, InterceptionController
from .dynamics import InterceptorParams, InterceptorState, TargetProfile, TargetState
from .observer import DelayedKalmanFilter, FilterState, MeasurementTooOld, NoiseConfig
from .sensing import CameraModel, ImageMeasurement, ImuModel, ImuSample
from .simulate import CepReport, RunResult, Scenario, cep, monte_carlo, run_scenario

__all__ = [
    "BarrierViolated",
    "CameraModel",
    "CepReport",
    "ControllerCommand",
    "ControllerConfig",
    "DelayedKalmanFilter",
    "FilterState",
    "ImageMeasurement",
    "ImuModel",
    "ImuSample",
    "InterceptionController",
    "InterceptorParams",
    "InterceptorState",
    "MeasurementTooOld",
    "NoiseConfig",
    "RunResult",
    "Scenario",
    "TargetProfile",
    "TargetState",
    "cep",
    "monte_carlo",
    "run_scenario",
]
