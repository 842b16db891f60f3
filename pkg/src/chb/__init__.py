"""Nonlocal Cahn-Hilliard-Brinkman solver with adjoint-based optimal control."""

from .domain import (CostWeights, GridSpec, Kernel, ModelConfig, Potential, TrackingData,
                     VelocityField, validate_assumptions)
from .forward import Model, simulate

__version__ = "0.1.0"

__all__ = ["CostWeights", "GridSpec", "Kernel", "Model", "ModelConfig", "Potential",
           "TrackingData", "VelocityField", "simulate", "validate_assumptions", "__version__"]
