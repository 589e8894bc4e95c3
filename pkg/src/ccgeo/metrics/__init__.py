"""Distance estimators and audits of the anisotropic metric inequalities."""

from .cc import ControlPath, cc_distance, heisenberg_lattice_distance, simulate
from .curves import DerivedSet, PolygonalCurve, derived_set, mean_value_point
from .estimate import DistanceEstimate
from .eta import balanced_times, eta_distance, eta_length, squeezed_lower_bound

__all__ = [
    "ControlPath", "DerivedSet", "DistanceEstimate", "PolygonalCurve", "balanced_times", "cc_distance",
    "derived_set", "eta_distance", "eta_length", "heisenberg_lattice_distance", "mean_value_point",
    "simulate", "squeezed_lower_bound",
]
from .audits import (  # noqa: E402
    eta_continuity_audit,
    holder_sandwich_audit,
    metric_consistency_audit,
    squeeze_audit,
    symmetry_audit,
    triangle_audit,
)

__all__ += [
    "eta_continuity_audit", "holder_sandwich_audit", "metric_consistency_audit", "squeeze_audit",
    "symmetry_audit", "triangle_audit",
]
