"""Kropina metrics from Zermelo navigation: curvature, geodesics and classification checks."""
from .conic_kropina import (
    FDConfig,
    FlagFrame,
    KropinaMetric,
    QuadraticMetric,
    curvature_tensors,
    domain_contains,
    F_eval,
    flag_curvature,
    fundamental_tensor,
    hamel_residual,
    scalar_flag_residual,
    spray,
    spray_energy,
)
from .exceptions import (
    BoundaryProximityError,
    ChartDomainError,
    DegenerateFlagError,
    InputError,
    KropinaError,
    OutsideConicDomainError,
    SamplingError,
    ValidationError,
)
from .navigation import KropinaData, NavigationData, kropina_to_nav, nav_F, nav_to_kropina

__version__ = "0.1.0"
