"""Lateral shifts of three-level matter waves scattered by a Raman laser slab."""

from .config import RunConfig, figure_preset, validate_config
from .model import IncidentWave, SlabParams, critical_angle, effective_detunings
from .scattering import solve_scattering
from .shifts import lateral_shift_kspace, lateral_shift_theta, sweep

__all__ = [
    "IncidentWave",
    "RunConfig",
    "SlabParams",
    "critical_angle",
    "effective_detunings",
    "figure_preset",
    "lateral_shift_kspace",
    "lateral_shift_theta",
    "solve_scattering",
    "sweep",
    "validate_config",
]
