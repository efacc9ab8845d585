"""Game-theoretic multi-agent roundabout traffic simulator."""

__version__ = "0.1.0"

from .geometry import (
    Geometry,
    Maneuver,
    NavigationPath,
    PathKind,
    RoundaboutSpec,
    Status,
    build_path,
    build_roundabout,
    path_distance,
    path_pose,
)
from .dynamics import Configuration, step, update_status

__all__ = [
    "Geometry",
    "Maneuver",
    "NavigationPath",
    "PathKind",
    "RoundaboutSpec",
    "Status",
    "build_path",
    "build_roundabout",
    "path_distance",
    "path_pose",
    "Configuration",
    "step",
    "update_status",
    "__version__",
]
