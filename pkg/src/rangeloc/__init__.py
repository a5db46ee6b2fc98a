"""Distributed active localization of range-measured targets.

Mobile agents range one or more targets, fuse the measurements with a
neighbourhood consensus + innovations recursion, and move greedily to shrink
the estimate's error ellipsoid.
"""

from rangeloc.consensus import Scheme
from rangeloc.estimators import ConsensusRangeLocalizer, LinearRangeLocalizer
from rangeloc.linmodel import Estimate, SingularInformationError, WeightMode
from rangeloc.sim import ScenarioConfig, run_monte_carlo, run_trial

__version__ = "0.1.0"

__all__ = [
    "ConsensusRangeLocalizer",
    "Estimate",
    "LinearRangeLocalizer",
    "ScenarioConfig",
    "Scheme",
    "SingularInformationError",
    "WeightMode",
    "run_monte_carlo",
    "run_trial",
]
