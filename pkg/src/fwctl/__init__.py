"""Fixed-wing UAV attitude-control toolkit.

Simulation (6-DOF airframe, actuators, wind disturbances), the attitude
tracking environment, classical and sampling-based controllers, a compact
model-based RL training loop, and an evaluation harness with a CLI and a
TCP environment server.
"""

from .airframe import AeroModel, AirState, RigidBodyState, SurfaceDeflections
from .env import (
    ACTION_DIM,
    OBS_DIM,
    OBS_FIELDS,
    EpisodeConfig,
    FixedWingEnv,
    RewardConfig,
)
from .wind import GustSpec, WindField, WindSample

__version__ = "0.1.0"

__all__ = [
    "AeroModel", "AirState", "RigidBodyState", "SurfaceDeflections",
    "EpisodeConfig", "FixedWingEnv", "RewardConfig",
    "OBS_DIM", "OBS_FIELDS", "ACTION_DIM",
    "GustSpec", "WindField", "WindSample",
    "__version__",
]
