# thalassa/__init__.py
"""
Thalassa - sound speed profile inversion from multibeam echo sounder travel times.

Pipeline: EOF basis from historical profiles -> layered ray tracing ->
regularised Gauss-Newton inversion over an alpha grid -> alpha selection.
"""

from thalassa.eof import EofBasis, build_basis, log_prior, project, reconstruct, sample_coefficients
from thalassa.errors import ThalassaError
from thalassa.forward import Geometry, TravelTimeSet, layered_travel_time, travel_times, travel_times_of_coefficients
from thalassa.invert import InversionConfig, SweepResult, cost, gauss_newton, jacobian_fd, residual_vector, sweep
from thalassa.profiles import DepthGrid, ProfileSet, SoundSpeedProfile, parse_profiles, rms_error
from thalassa.synth import (
    MeasurementSet,
    SynthOceanSpec,
    generate_ocean,
    make_geometry,
    sigma_t_from_spatial,
    simulate_measurements,
)

__version__ = "1.0.0"

__all__ = [
    "EofBasis",
    "build_basis",
    "log_prior",
    "project",
    "reconstruct",
    "sample_coefficients",
    "ThalassaError",
    "Geometry",
    "TravelTimeSet",
    "layered_travel_time",
    "travel_times",
    "travel_times_of_coefficients",
    "InversionConfig",
    "SweepResult",
    "cost",
    "gauss_newton",
    "jacobian_fd",
    "residual_vector",
    "sweep",
    "DepthGrid",
    "ProfileSet",
    "SoundSpeedProfile",
    "parse_profiles",
    "rms_error",
    "MeasurementSet",
    "SynthOceanSpec",
    "generate_ocean",
    "make_geometry",
    "sigma_t_from_spatial",
    "simulate_measurements",
]
