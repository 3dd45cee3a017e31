"""Renormalisation-group transport maps for lattice field theories.

Numerical companion for Lipschitz transport from the lattice Gaussian free
field to interacting measures ``nu ~ exp(-V_0) gamma``: spectral Gaussian
calculus, Monte-Carlo renormalised potentials, Bakry-Emery profiles, the
Langevin transport flow, functional-inequality checks and the Polchinski
bridge.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .bridge import BridgeRun, BridgeSimulator, semigroup_estimate, simulate_bridge
from .ensemble import FieldEnsemble
from .errors import (
    ConfigurationError,
    CorruptionError,
    DegenerateEstimateError,
    DomainError,
    GridTooCoarseError,
    InstabilityError,
    InvalidCovarianceError,
    RGTransportError,
    ShapeError,
    StepSizeError,
    UnsupportedDimensionError,
)
from .gaussian import (
    HEAT_KERNEL,
    SpectralMultiplier,
    TabulatedSchedule,
    apply_multiplier,
    linear_schedule,
    ou_transition,
    sample_gaussian,
    scale_multipliers,
    truncated_heat_schedule,
)
from .generator import generator_eigs
from .inequalities import (
    DivergenceSpec,
    InequalityReport,
    TestFunction,
    isoperimetry_check,
    p_poincare_check,
    psi_sobolev_check,
)
from .io import read_ensemble, write_ensemble
from .lattice import LatticeGeometry, MassParams, build_geometry, fourier_modes, laplacian_apply
from .mcmc import mala_sample
from .potentials import (
    PotentialModel,
    SineGordonParams,
    ZeroPotential,
    check_derivatives,
    quadratic_model,
    sine_gordon_model,
)
from .renorm import (
    BEProfile,
    GaussianRenorm,
    MCEstimate,
    RenormEstimator,
    be_profile,
    estimate_vt,
    estimate_vt_derivatives,
    integrate_lambda,
    make_renormalizer,
    pde_residual,
)
from .transport import (
    FlowIntegrator,
    LipschitzReport,
    TransportResult,
    flow_forward,
    jacobian_propagate,
    lipschitz_report,
    pushforward_ensemble,
    transport_evaluate,
    velocity_field,
)
