"""Noise-assisted simulation of open quantum systems.

Device Pauli noise is partially cancelled or amplified layer by layer so that a
Trotterized circuit reproduces the dynamics of a target master equation.
"""

from .engine import Observable, SimulationPlan, TrajectoryEstimate, exact_mitigated_expectation, run
from .lindblad import DissipatorTerm, Rate, RateSchedule, integrate
from .mitigation import CostModel, MitigationPlan, light_cone, total_cost
from .noise import NoiseSpec, PauliChannel, ResetSpec, characterize
from .pauli import Channel, PauliString
from .rate_control import InfeasiblePlanError, plan_device, plan_scheme_I, plan_scheme_II
from .trotter import Filler, TrotterPlan

__version__ = "0.1.0"

__all__ = [
    "Channel",
    "CostModel",
    "DissipatorTerm",
    "Filler",
    "InfeasiblePlanError",
    "MitigationPlan",
    "NoiseSpec",
    "Observable",
    "PauliChannel",
    "PauliString",
    "Rate",
    "RateSchedule",
    "ResetSpec",
    "SimulationPlan",
    "TrajectoryEstimate",
    "TrotterPlan",
    "characterize",
    "exact_mitigated_expectation",
    "integrate",
    "light_cone",
    "plan_device",
    "plan_scheme_I",
    "plan_scheme_II",
    "run",
    "total_cost",
]
