"""Numerical laboratory for skew-product partially hyperbolic attractors.

Submodules:

* ``params``: validated map parameters and the key=value config format
* ``dynamics``: the maps F0 and F_{mu,n}, inverse branches, orbits
* ``unstable``: the unstable slope field and its fixed-point operator
* ``transversality``: stable distance and transversality audits
* ``measures``: atomic measures, stable projection, r-scale norms
* ``physical``: Birkhoff averages and basin surveys
"""

from .errors import (
    AtomStarvation,
    BranchMiss,
    ConstraintViolation,
    DepthTooSmall,
    DynlabError,
    FitDegenerate,
    InsufficientDepth,
    InvalidRho,
    NoConvergence,
    NotContracting,
)
from .params import EX1, EX2, MapParams, default_params, load_config, validate_params

__version__ = "0.1.0"

__all__ = [
    "AtomStarvation",
    "BranchMiss",
    "ConstraintViolation",
    "DepthTooSmall",
    "DynlabError",
    "EX1",
    "EX2",
    "FitDegenerate",
    "InsufficientDepth",
    "InvalidRho",
    "MapParams",
    "NoConvergence",
    "NotContracting",
    "default_params",
    "load_config",
    "validate_params",
]
