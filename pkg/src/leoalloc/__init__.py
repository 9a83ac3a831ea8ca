"""Joint satellite association, transmit power and bandwidth allocation for LEO uplinks."""

__version__ = "0.1.0"

from .kernels import BACKEND
from .alternating import (
    AlgorithmConfig,
    Solution,
    evaluate_solution,
    initialize_association,
    round_association,
    run_algorithm1,
    update_association,
)
from .assoc import BinaryAssociation, enumerate_association_oracle, solve_association, solve_gap
from .channel import ChannelParams, beam_pattern, bessel_j1, channel_gain
from .convex import Allocation, FractionalAssociation, SolveReport, solve_allocation
from .errors import InfeasibleError
from .greedy import run_greedy
from .instance import ProblemInstance, ScenarioConfig, generate_scenario, load_instance, save_instance

__all__ = [
    "BACKEND",
    "AlgorithmConfig",
    "Allocation",
    "BinaryAssociation",
    "ChannelParams",
    "FractionalAssociation",
    "InfeasibleError",
    "ProblemInstance",
    "ScenarioConfig",
    "Solution",
    "SolveReport",
    "beam_pattern",
    "bessel_j1",
    "channel_gain",
    "enumerate_association_oracle",
    "evaluate_solution",
    "generate_scenario",
    "initialize_association",
    "load_instance",
    "round_association",
    "run_algorithm1",
    "run_greedy",
    "save_instance",
    "solve_allocation",
    "solve_association",
    "solve_gap",
    "update_association",
]
