"""Finite-volume simulation and verification of bulk-surface reaction-diffusion-sorption systems."""
from .disc import Grid, State, VelocityField, build_grid, total_mass
from .errors import DomainError, StepFailure, UsageError
from .model import ReactionNetwork, SorptionModel, SpeciesSystem, TriangularStructure
from .stepper import Integrator, Problem, RunResult, StepperConfig, estimate_blowup

__version__ = "0.1.0"

__all__ = [
    "DomainError", "Grid", "Integrator", "Problem", "ReactionNetwork", "RunResult", "SorptionModel",
    "SpeciesSystem", "State", "StepFailure", "StepperConfig", "TriangularStructure", "UsageError",
    "VelocityField", "build_grid", "estimate_blowup", "total_mass",
]
