"""Multi-agent aerial coverage of urban ground: environments, planners and probe metrics."""

from .engine import ALGORITHMS, SimConfig, SimResult, place_agents, run
from .env import Building, Environment, EnvSpec, empty_environment, generate_environment, resolve_environment
from .metrics import MetricsReport, ProbeSet
from .traj import MultiPath, Trajectory

__all__ = [
    "ALGORITHMS",
    "Building",
    "EnvSpec",
    "Environment",
    "MetricsReport",
    "MultiPath",
    "ProbeSet",
    "SimConfig",
    "SimResult",
    "Trajectory",
    "empty_environment",
    "generate_environment",
    "place_agents",
    "resolve_environment",
    "run",
]
