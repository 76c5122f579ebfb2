"""Exact propagation and dispersive/Strichartz checks for Schrodinger
equations with time-decaying harmonic potentials and magnetic fields."""

from tdho.classical import (
    AssumptionViolation,
    ClassicalBasis,
    ClassicalSolveError,
    CoefficientModel,
    FactorValues,
    constant_model,
    factors_at,
    free_model,
    model_from_profile,
    solve_classical,
    verify_asymptotics,
)
from tdho.grid import GridSpec, WaveField
from tdho.propagator import (
    GaussianState,
    dilate,
    evolve,
    evolve_adjoint,
    fourier,
    free_evolve,
    gaussian_oracle,
    harmonic_flow,
    modulate,
    propagate,
    split_step_reference,
)
from tdho.estimates import (
    NormSpec,
    ScanReport,
    compute_r0,
    decay_slope_scan,
    dispersive_ratio,
    lp_ratio,
    n_tilde,
    sine_lower_bound_check,
    strichartz_homogeneous_check,
    duhamel_check,
    weighted_strichartz_norm,
)
from tdho.magnetic import MagneticModel, evolve_landau, landau, magnetic_dispersive_scan, rotate
from tdho.config import ConfigError, load_config

__version__ = "0.1.0"
