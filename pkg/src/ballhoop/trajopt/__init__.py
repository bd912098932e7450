from .collocation import LinearDynamics, NlpProblem, OcpSpec, RollDynamics, StateGuard, Trajectory, transcribe
from .solver import SolveError, solve

__all__ = [
    "LinearDynamics", "NlpProblem", "OcpSpec", "RollDynamics", "StateGuard", "Trajectory",
    "transcribe", "SolveError", "solve",
]
