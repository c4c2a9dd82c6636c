"""Atlas-model particle simulation and measure-valued free-boundary solvers.

The package simulates a system of Brownian particles whose leftmost member
carries a drift proportional to the density scale, solves the associated
free-boundary heat problem for the cumulative mass function by two
independent numerical routes (an operator-splitting envelope pair and a
Duhamel/Volterra boundary solver), and cross-verifies the two against each
other and against the particle system with measure metrics, weak-form
residuals, and ordering property suites.
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    atlas_sim,
    boundary,
    heat_semigroup,
    initial_conditions,
    mass_profile,
    mild,
    splitting,
    verify,
)
