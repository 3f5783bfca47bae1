"""Statistical hybrid quantum-classical dynamics via quantum moment fields.

The package propagates weighted trajectory ensembles of coupled
classical/two-level microstates, estimates the quantum moment fields they
induce on a phase-space grid, evaluates the coupled moment equations, and
closes the level-one equation with an entropy-maximizing second moment so
it can be integrated on the grid directly.  A CLI exposes reproducible
runs; see the README for formats.
"""

__version__ = "0.1.0"

from .grid import PhaseGrid
from .scenario import (OperatorField, ConditionalMixtureField, load_scenario,
                       finite_difference_partials)
from .ehrenfest import Microstate, microstate_rhs, hybrid_energy, integrate_trajectory
from .ensemble import (Ensemble, MomentField, sample_initial, propagate,
                       estimate_moment_field, exact_moment_field,
                       average_observable, average_product, factorize,
                       hybrid_entropy)
from .hierarchy import (HierarchyRHS, first_moment_rhs, kth_moment_rhs,
                        marginal_rhs, average_rate, theta_decomposition,
                        fig1_scan)
from .maxent import (ClosureResult, check_constraints, closure_closed_form,
                     closure_numeric, effective_first_moment_rhs)
from .evolution import evolve_effective, compare_to_ensemble

__all__ = [
    "__version__",
    "PhaseGrid",
    "OperatorField", "ConditionalMixtureField", "load_scenario",
    "finite_difference_partials",
    "Microstate", "microstate_rhs", "hybrid_energy", "integrate_trajectory",
    "Ensemble", "MomentField", "sample_initial", "propagate",
    "estimate_moment_field", "exact_moment_field", "average_observable",
    "average_product", "factorize", "hybrid_entropy",
    "HierarchyRHS", "first_moment_rhs", "kth_moment_rhs", "marginal_rhs",
    "average_rate", "theta_decomposition", "fig1_scan",
    "ClosureResult", "check_constraints", "closure_closed_form",
    "closure_numeric", "effective_first_moment_rhs",
    "evolve_effective", "compare_to_ensemble",
]
