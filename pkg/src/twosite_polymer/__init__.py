"""Simulation and verification engine for the two-site directed polymer.

The model: a continuous-time random walk on {1, 2} reweighted by two
independent Brownian environments at inverse temperature b.  The
point-to-point partition functions (X1, X2) solve a two-dimensional
linear SDE with multiplicative noise; this package evaluates the model's
closed-form quantities, integrates the SDE at scale, and cross-checks
everything against exact moment flows and an independent Feynman-Kac
chain sampler.
"""

from .analytic import (
    AnalyticSolution,
    Beta,
    bisect_alpha_minus,
    eval_poly,
    free_energy,
    overlap_limit_stationary,
    solve_alpha,
)
from .ensemble import (
    ConvergenceReport,
    EnsembleCurve,
    ModelParams,
    SimulationError,
    extrapolated_free_energy,
    fit_convergence,
    free_energy_estimators,
    run_ensemble,
)
from .moments import MomentVector, exact_en, exact_ez2, moment_flow
from .sampler import (
    ChainPath,
    EnvironmentGrid,
    PartitionEstimate,
    estimate_partition,
    hamiltonian,
    sample_chain,
)
from .sde import (
    NoiseIncrement,
    PathSeries,
    PolymerState,
    StepError,
    StepScheme,
    derive_observables,
    simulate_path,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticSolution",
    "Beta",
    "ChainPath",
    "ConvergenceReport",
    "EnsembleCurve",
    "EnvironmentGrid",
    "ModelParams",
    "MomentVector",
    "NoiseIncrement",
    "PartitionEstimate",
    "PathSeries",
    "PolymerState",
    "SimulationError",
    "StepError",
    "StepScheme",
    "bisect_alpha_minus",
    "derive_observables",
    "estimate_partition",
    "eval_poly",
    "exact_en",
    "exact_ez2",
    "extrapolated_free_energy",
    "fit_convergence",
    "free_energy",
    "free_energy_estimators",
    "hamiltonian",
    "moment_flow",
    "overlap_limit_stationary",
    "run_ensemble",
    "sample_chain",
    "simulate_path",
    "solve_alpha",
    "step",
]
