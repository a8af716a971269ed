"""Przanowski's equation for quaternion-Kahler four-manifolds.

Submodules: jets (truncated Taylor jets), expr (expression parser), manifolds
(example specifications), geometry (tetrad, connection, curvature), operators,
lax, twistor, solver and cli.
"""
from .expr import parse
from .geometry import curvature_at, frame_at
from .jets import Jet, Point4
from .manifolds import ManifoldSpec, builtin, load_manifold
from .operators import prz_residual

__version__ = "0.1.0"

__all__ = [
    "Jet",
    "Point4",
    "ManifoldSpec",
    "builtin",
    "load_manifold",
    "parse",
    "frame_at",
    "curvature_at",
    "prz_residual",
]
