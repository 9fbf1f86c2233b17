"""Toolkit for dwell-time switched linear systems.

Core pieces: dense matrix flows and monodromy products, dwell-time
switching signals, projected dynamics on the projective line/space,
grid computation of invariant dwell-time control sets on RP^1, two
estimators of the maximal Lyapunov exponent, and simulation of the
associated piecewise-deterministic random switching process.
"""

from .matrices import ModeSet, expm, monodromy, spectral_abscissa, spectral_radius
from .signals import DwellSignal, PeriodicSignal, concat, periodic_seam_valid, sample_random, validate
from .projective import (
    ProjPoint,
    angular_speed,
    angular_velocity,
    proj_distance,
    proj_flow,
    radial_log_growth,
)
from .reach import (
    GridSet,
    ReachConfig,
    attainable,
    example31_modes,
    example31_oracle,
    ics_compute,
    interior_nonempty_check,
    step_reach,
)
from .lyapunov import (
    IrreducibilityReport,
    LyapEstimate,
    ReducedEstimate,
    block_reduce,
    is_irreducible,
    lambda_periodic,
    lambda_random,
    lambda_reduced,
)
from .pdmp import (
    ChiEstimate,
    MeasureHistogram,
    NuSupportReport,
    PdmpConfig,
    PdmpTrace,
    chi_integral,
    chi_per_jump,
    chi_time_average,
    invariant_histogram,
    nu_support_check,
    sample_dwell,
    simulate,
    thicken_by_flow,
)

__version__ = "0.1.0"

__all__ = [
    "ModeSet", "expm", "monodromy", "spectral_abscissa", "spectral_radius",
    "DwellSignal", "PeriodicSignal", "concat", "periodic_seam_valid", "sample_random", "validate",
    "ProjPoint", "angular_speed", "angular_velocity", "proj_distance", "proj_flow",
    "radial_log_growth",
    "GridSet", "ReachConfig", "attainable", "example31_modes", "example31_oracle",
    "ics_compute", "interior_nonempty_check", "step_reach",
    "IrreducibilityReport", "LyapEstimate", "ReducedEstimate", "block_reduce",
    "is_irreducible", "lambda_periodic", "lambda_random", "lambda_reduced",
    "ChiEstimate", "MeasureHistogram", "NuSupportReport", "PdmpConfig", "PdmpTrace",
    "chi_integral", "chi_per_jump", "chi_time_average", "invariant_histogram",
    "nu_support_check", "sample_dwell", "simulate", "thicken_by_flow",
    "__version__",
]
