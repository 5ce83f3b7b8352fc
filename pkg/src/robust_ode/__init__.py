"""Distributionally robust aggregation of heterogeneous ODE trajectories.

Smooth each noisy source, weight the sources by the stabilized worst-case
reward program, aggregate a robust trajectory with pointwise confidence
intervals, and fit a link function to it by gradient matching.
"""
from .dynamics_fit import FittedDynamics, fit_erm, fit_gradient_matching, predict_derivative
from .errors import InputError, NumericalError, RobustODEError
from .gamma import GammaMatrix, estimate_gamma, oracle_gamma, split_gamma
from .ode_models import (Case, Kind, Level, SimulationConfig, SourceObservations, TimeGrid, generate_sources,
                         integrate)
from .pipeline import PipelineConfig, run_pipeline
from .robust_trajectory import RobustTrajectory, aggregate, confidence_band, robust_sigma
from .smoothing import SmoothedSource, SmoothingConfig, smooth_source, smooth_sources
from .weights import (SimplexWeights, plug_in_weights, ridge_weights, select_tolerance, stabilized_weights)

__version__ = "0.1.0"
