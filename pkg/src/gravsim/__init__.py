"""gravsim: variable-gravity quadruped simulation and training toolkit."""

__version__ = "0.1.0"

from .robot import (  # noqa: F401
    EARTH_GRAVITY,
    GRAVITY_PRESETS,
    GeneralizedState,
    GravityEnv,
    RobotModel,
    load_model,
    reference_model,
)
