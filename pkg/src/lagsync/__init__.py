"""Simulation and verification of synchronization-tracking control for
networks of Lagrangian robots."""

from .dynamics import (
    ContractViolation,
    LagrangianModel,
    RobotState,
    UnsupportedCapability,
    default_model,
    forward_dynamics,
    load_model_file,
    model_terms,
    regressor,
)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ContractViolation",
    "LagrangianModel",
    "RobotState",
    "UnsupportedCapability",
    "default_model",
    "forward_dynamics",
    "load_model_file",
    "model_terms",
    "regressor",
]
