"""Spectral analysis and bound-state surgery for half-line matrix
Schrödinger operators -psi'' + V(x) psi = k^2 psi on x >= 0 with general
selfadjoint boundary conditions -B^† psi(0) + A^† psi'(0) = 0.

Submodules
----------
linalg    regularized dense complex linear algebra (pseudoinverse, projectors)
problems  potentials, boundary pairs, problem specifications, JSON i/o
waves     the four matrix wave solutions f, phi, g, Psi
spectral  Jost/scattering matrices, bound states, normalization matrices
surgery   the four discrete-spectrum transformations and their composition
fixtures  executable reference models with golden values
cli       command-line front end
"""

from .problems import (
    Potential,
    BoundaryPair,
    ProblemSpec,
    validate_boundary,
    family_exponential,
    family_inverse_square,
    combine_scalar_to_matrix,
    tabulated_potential,
    zero_potential,
)
from .spectral import (
    assemble_spectrum,
    find_bound_states,
    jost_matrix,
    physical_solution,
    rho_density,
    scattering_matrix,
)
from .surgery import (
    Remove,
    Lower,
    Add,
    Raise,
    remove_bound_state,
    lower_multiplicity,
    add_bound_state,
    raise_multiplicity,
    compose,
)

__all__ = [
    "Potential",
    "BoundaryPair",
    "ProblemSpec",
    "validate_boundary",
    "family_exponential",
    "family_inverse_square",
    "combine_scalar_to_matrix",
    "tabulated_potential",
    "zero_potential",
    "assemble_spectrum",
    "find_bound_states",
    "jost_matrix",
    "physical_solution",
    "rho_density",
    "scattering_matrix",
    "Remove",
    "Lower",
    "Add",
    "Raise",
    "remove_bound_state",
    "lower_multiplicity",
    "add_bound_state",
    "raise_multiplicity",
    "compose",
]

__version__ = "0.1.0"
