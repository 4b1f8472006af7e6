"""Sinkhorn-Frank-Wolfe solver for entropic transport with a convex cost on couplings."""

from .measures import (
    Coupling,
    DimensionError,
    DiscreteMeasure,
    GridPoint,
    convex_combine,
    marginal_error,
    marginals,
    relative_entropy,
    total_variation,
)
from .kernel import InfeasibleError, ReferenceKernel, entropy_wrt_kernel, gibbs_reference, tilt, tilting_identity_residual
from .functional import (
    BoxPartition,
    CongestionSpec,
    LinearFunctional,
    QuadraticCongestion,
    ZeroFunctional,
    congestion_occupancy,
    derivative_check,
    quadratic_congestion,
    zero_functional,
)
from .inner import InnerResult, InnerSettings, Potentials, first_order_residual, solve_inner
from .flow import (
    SfwConfig,
    SfwDivergence,
    SfwTrace,
    default_initial,
    dissipation_residual,
    energy,
    physical_energy,
    reference_run,
    run,
)
from .uav import MarginalSpec, Scenario, ScenarioConfig, build_scenario, transport_cost, travel_time

__version__ = "0.1.0"
