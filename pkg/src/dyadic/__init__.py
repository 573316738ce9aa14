"""Simulator and verification toolkit for the dyadic model of the Navier-Stokes equations."""

__version__ = "0.1.0"

from .model import (
    ConstantSet,
    ModelParams,
    State,
    constants,
    default_gamma,
    lyapunov_h,
    norm_gamma,
)
from .integrator import EventSpec, StepperConfig, Trajectory, integrate, step

__all__ = [
    "ConstantSet",
    "EventSpec",
    "ModelParams",
    "State",
    "StepperConfig",
    "Trajectory",
    "constants",
    "default_gamma",
    "integrate",
    "lyapunov_h",
    "norm_gamma",
    "step",
]
