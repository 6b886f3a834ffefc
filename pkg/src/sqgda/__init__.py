"""Pseudo-spectral SQG simulator with feedback-nudging data assimilation."""

from .assimilation import (
    TwinExperimentConfig,
    check_conditions,
    fit_decay_rate,
    parameter_sweep,
    run_twin,
    spin_up,
)
from .dynamics import ForcingSpec, PhysicalParams, SQGModel, StepperConfig, nonlinear_term, run
from .errors import (
    CFLError,
    ConfigurationError,
    DivergenceError,
    FitError,
    InvalidInputError,
    ResolutionError,
    SQGError,
)
from .observation import (
    RoughModal,
    ShiftedVolumeAverage,
    SmoothModal,
    VolumeAverage,
    build_partition,
    make_operator,
)
from .properties import verify_properties
from .spectral import GridSpec, SpectralField, lambda_inv_pairing, norm
from .streamfunction import (
    StreamExtensionSpec,
    gradient_error_exact,
    gradient_error_quadrature,
    harmonic_extension,
)

__version__ = "0.1.0"
