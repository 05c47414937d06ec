"""Sampling-based safety filter.

Wraps any nominal controller: candidate control sequences are drawn from a
safety-conditioned distribution (Stein variational particles or a CEM
Gaussian), rolled out through the system model, and scored against a level
function. The nominal input passes through whenever a safe candidate exists;
otherwise a stored backup sequence takes over. A scenario-approach sample
size bound certifies how restrictive the interventions are.
"""

from svfilter.errors import (
    ConfigError,
    InitializationError,
    InvariantViolationError,
)
from svfilter.rng import RngStream
from svfilter.dynamics import (
    SystemModel,
    UnicycleModel,
    IntersectionModel,
    Trajectory,
    rollout,
    rollout_batch,
)
from svfilter.safety import (
    ObstacleField,
    IntersectionLevel,
    CostConfig,
    trajectory_cost,
    trajectory_costs,
    is_safe,
    polygon_distance,
)
from svfilter.svgd import (
    SvgdConfig,
    GaussianMixture,
    build_distribution,
    sample_mixture,
)
from svfilter.cem import CemConfig, cem_build
from svfilter.scenario import (
    ScenarioParams,
    required_sample_size,
    implied_epsilon,
    estimate_safe_sample_rate,
)
from svfilter.filtering import (
    FilterState,
    StoppedSet,
    filter_step,
    initialize_backup,
    shift_and_extend,
    project_terminal_stop,
)

__version__ = "0.1.0"
