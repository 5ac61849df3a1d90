"""Uncertainty propagation through filtering-based probabilistic ODE solvers.

The package solves parameterized initial value problems with a square-root
extended-Kalman ODE filter over an integrated-Wiener-process prior, and
propagates Gaussian or uniform parameter uncertainty through the solver by
quadrature and Gaussian-mixture moment matching.  Reference oracles (fixed
step Runge-Kutta plus Monte Carlo) and a CLI for the bundled benchmark
problems are included.
"""

from .exceptions import (
    DegenerateResidual,
    DimensionMismatch,
    DimensionTooLarge,
    MixtureGridMismatch,
    NodeSolveFailed,
    NonFiniteState,
    NonPositiveStep,
    NonPSD,
    OdeupError,
    OrderOutOfRange,
    ShapeMismatch,
    SingularInnovation,
    SingularPrediction,
    UnknownProblem,
    UnsupportedOrder,
)
from .gaussians import (
    Gaussian,
    GaussianMixture,
    affine_predict,
    condition_linear,
    make_gaussian,
    mixture_cov,
    mixture_mean,
)
from .ivp import (
    BENCHMARK_NAMES,
    ConcreteIVP,
    GaussianParameters,
    IVProblem,
    UniformBoxParameters,
    apply_params,
    benchmark,
    solution_derivatives,
    uniform_box_from_gaussian,
)
from .odefilter import (
    ODESolution,
    SolverConfig,
    calibrate,
    ek_step,
    initialize,
    smooth,
    solve,
    time_grid,
)
from .prior import IWPPrior, process_noise_sqrt, projection, transition
from .propagate import (
    ClassicSolverConfig,
    PropagationResult,
    SweepRow,
    propagate,
    propagate_nonpn,
    step_size_sweep,
)
from .quadrature import (
    QuadratureRule,
    RuleSpec,
    gauss_hermite,
    monte_carlo,
    spherical_cubature,
)
from .reference import (
    MonteCarloReference,
    ReferenceSolution,
    fig1_demo,
    linear_analytic,
    mc_reference,
    rk4_solve,
)

__version__ = "0.1.0"

__all__ = [
    "BENCHMARK_NAMES",
    "ClassicSolverConfig",
    "ConcreteIVP",
    "DegenerateResidual",
    "DimensionMismatch",
    "DimensionTooLarge",
    "Gaussian",
    "GaussianMixture",
    "GaussianParameters",
    "IVProblem",
    "IWPPrior",
    "MixtureGridMismatch",
    "MonteCarloReference",
    "NodeSolveFailed",
    "NonFiniteState",
    "NonPSD",
    "NonPositiveStep",
    "ODESolution",
    "OdeupError",
    "OrderOutOfRange",
    "PropagationResult",
    "QuadratureRule",
    "ReferenceSolution",
    "RuleSpec",
    "ShapeMismatch",
    "SingularInnovation",
    "SingularPrediction",
    "SolverConfig",
    "SweepRow",
    "UniformBoxParameters",
    "UnknownProblem",
    "UnsupportedOrder",
    "affine_predict",
    "apply_params",
    "benchmark",
    "calibrate",
    "condition_linear",
    "ek_step",
    "fig1_demo",
    "gauss_hermite",
    "initialize",
    "linear_analytic",
    "make_gaussian",
    "mc_reference",
    "mixture_cov",
    "mixture_mean",
    "monte_carlo",
    "process_noise_sqrt",
    "projection",
    "propagate",
    "propagate_nonpn",
    "rk4_solve",
    "smooth",
    "solution_derivatives",
    "solve",
    "spherical_cubature",
    "step_size_sweep",
    "time_grid",
    "transition",
    "uniform_box_from_gaussian",
]
