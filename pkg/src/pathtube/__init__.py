"""Stochastic path integrals restricted to a tube around the classical trajectory.

Monte Carlo propagators from pinned fluctuation paths, with independent
closed-form, PDE and brute-force oracles for validation.
"""

from .errors import (
    BoundaryError,
    BoundViolationError,
    ConfigError,
    ContourError,
    DegenerateMetricError,
    FrameError,
    NearPoleError,
    NoDataError,
    OutOfChartError,
    PartitionError,
    PathCsvError,
    PathTubeError,
    ShapeError,
    SizeError,
    StepSizeError,
    TrajectoryError,
    WeightError,
)
from .geometry import (
    ClassicalTrajectory,
    Frame,
    MetricChart,
    christoffel,
    energy_drift,
    exp_map,
    flat_chart,
    hamiltonian,
    log_map,
    parallel_frame,
    solve_classical_trajectory,
)
from .tube import (
    DiscretePath,
    ProbeResult,
    TubeSpec,
    action,
    action_deviation,
    admissibility_probe,
    default_radius,
    h1_distance,
    load_path_csv,
    resolvent,
    save_path_csv,
    trajectory_path,
)
from .dynamics import (
    DisplacementBridgeEnsemble,
    FluctuationPath,
    FreeDiffusionEnsemble,
    SDEParams,
    TubeEnsemble,
    assemble_path,
    barrier_gradient,
    displacement_field,
    energy_cost,
    gauge_fix_longitudinal,
    girsanov_log_weight,
    sample_brownian_bridge,
    sample_free_diffusion,
    sample_rng,
    simulate_fluctuation,
)
from .integrator import (
    DisintegrationResult,
    KernelEstimate,
    MCAccumulator,
    Observable,
    PartitionSpec,
    RiemannProductResult,
    ThetaSeries,
    disintegration_check,
    endpoint_observable,
    euclidean_density,
    feynman_kac_expectation,
    fiber_observable,
    lorentzian_from_theta,
    propagator,
    propagator_chunked,
    riemann_product,
    stochastic_path_integral,
    theta_series,
    unit_observable,
)
from .oracles import (
    PDEGrid,
    heat_kernel,
    lattice_path_sum,
    mehler_kernel,
    solve_backward_pde,
)

__version__ = "0.1.0"
