"""Equilibria, linearised stability and direct simulation for a nonlinear
size-structured population whose newborns enter at a distribution of sizes.

The modules build on each other:

``numerics``     grids, quadrature, Volterra sums, real and complex root finding
``rates``        growth, mortality and fertility families plus validation
``equilibrium``  stationary solutions by the separable and the spectral route
``stability``    linearised operator, sufficient conditions, characteristic roots
``simulator``    positivity-preserving finite-volume time stepping
``cli``          the ``structpop`` command
"""

from .equilibrium import (
    EquilibriumSolution,
    assemble_B_P,
    dominant_eigenvalue,
    net_reproduction,
    polish_equilibrium,
    solve_equilibrium,
    solve_equilibrium_general,
    solve_equilibrium_separable,
)
from .errors import StructPopError
from .numerics import Rectangle, SizeGrid
from .rates import VitalRates, make_fertility, make_rate_surface, validate_rates
from .simulator import perturb_equilibrium, simulate
from .stability import assemble_linearized, find_char_roots, spectral_verdict

__all__ = [
    "EquilibriumSolution",
    "Rectangle",
    "SizeGrid",
    "StructPopError",
    "VitalRates",
    "assemble_B_P",
    "assemble_linearized",
    "dominant_eigenvalue",
    "find_char_roots",
    "make_fertility",
    "make_rate_surface",
    "net_reproduction",
    "perturb_equilibrium",
    "polish_equilibrium",
    "simulate",
    "solve_equilibrium",
    "solve_equilibrium_general",
    "solve_equilibrium_separable",
    "spectral_verdict",
    "validate_rates",
]
