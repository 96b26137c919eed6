"""Semilinear screened-Poisson solver with a priori bound certificates.

Solves ``(-Lap + k^2) u + f(u) = 0`` on a box with ``u = 0`` on the boundary,
by truncating ``f`` at ``+/-a`` and iterating the discrete Green-operator
map ``T(u) = -A^{-1} F(u)``; then checks the computed field against the
sup-norm, amplitude, energy and maximum-principle bounds.
"""

__version__ = "0.1.0"
