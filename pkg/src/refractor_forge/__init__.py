"""Design and verification of freeform refracting surfaces."""
from .blocks import (
    AffineFamily,
    BuildingBlockFamily,
    EllipsoidFamily,
    HyperboloidFamily,
    OvalFamily,
    affine_family,
    ellipsoid_family,
    hyperboloid_family,
    oval_family,
)
from .estimators import FarFieldRefractor, NearFieldRefractor, SecondBoundaryValueSolver
from .exceptions import ConfigError, InfeasibleAnchor, NonConvergence, NumericalError, RefractorError
from .geometry import PlanarDomain, QuadratureRule, SourceDomain, build_cap_quadrature, integrate
from .ovals import CartesianOval
from .refractor import PlaneScreen, PolyBlockRefractor, SceneConfig, SphereScreen, validate_scene
from .snell import TotalInternalReflection, can_refract_into, refract
from .solver import SolveOptions, SolveReport, check_monotone, solve, solve_dirac, solve_general, solve_second_bvp
from .verify import forward_map, ma_residual, raytrace

__version__ = "0.1.0"

__all__ = [
    "AffineFamily",
    "BuildingBlockFamily",
    "CartesianOval",
    "ConfigError",
    "EllipsoidFamily",
    "FarFieldRefractor",
    "HyperboloidFamily",
    "InfeasibleAnchor",
    "NearFieldRefractor",
    "NonConvergence",
    "NumericalError",
    "OvalFamily",
    "PlanarDomain",
    "PlaneScreen",
    "PolyBlockRefractor",
    "QuadratureRule",
    "RefractorError",
    "SceneConfig",
    "SecondBoundaryValueSolver",
    "SolveOptions",
    "SolveReport",
    "SourceDomain",
    "SphereScreen",
    "TotalInternalReflection",
    "affine_family",
    "build_cap_quadrature",
    "can_refract_into",
    "check_monotone",
    "ellipsoid_family",
    "forward_map",
    "hyperboloid_family",
    "integrate",
    "ma_residual",
    "oval_family",
    "raytrace",
    "refract",
    "solve",
    "solve_dirac",
    "solve_general",
    "solve_second_bvp",
    "validate_scene",
]
