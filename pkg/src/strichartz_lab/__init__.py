"""Numerical laboratory for lossless Strichartz estimates on the square torus."""

from .errors import GridError, InvariantViolation, LabError, ParameterError, QuadratureError, SupportError
from .lattice import LabParams, LatticeField, build_ladder, l2_norm, restrict_field, separated_pairs
from .propagator import SpaceTimeField, SpaceTimeGrid, propagate_direct, propagate_fft

__version__ = "0.1.0"
