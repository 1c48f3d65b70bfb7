"""Pseudospectral solver and verification suite for the tamed Navier-Stokes
equations on the periodic unit torus with compensated Poisson noise."""

__version__ = "0.1.0"

from .kernels import BACKEND
from .noise import (
    Control,
    DomainError,
    MarkSpace,
    NoiseCoefficient,
    PoissonSample,
    check_H1,
    compensator_drift,
    control_drift,
    cost,
    hypothesis_constants,
    sample_controlled_prm,
    sample_prm,
)
from .solver import (
    BlowupError,
    IterationError,
    SolverConfig,
    Trajectory,
    Truncation,
    project_truncation,
    solve_controlled,
    solve_sde,
    solve_skeleton,
    solve_skeleton_picard,
)
from .spectral import (
    SpectralField,
    TamingSpec,
    TorusGrid,
    apply_stokes,
    inner_product,
    leray_project,
    nonlinear_term,
    sobolev_norm_sq,
    tamed_drift,
    taming_value,
)

__all__ = [name for name in dir() if not name.startswith("_")]
