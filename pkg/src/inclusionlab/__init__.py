"""Numerical laboratory for semilinear parabolic differential inclusions.

Solves u'(t) + A u(t) in F(t, u(t)) with piecewise-linear finite elements
on nested dyadic grids, builds funnels of Galerkin solutions under
different selection strategies, tracks external trajectories with
a-posteriori certificates, and measures set convergence across levels.
"""

from . import backends

__version__ = "0.1.0"

__all__ = ["backends", "__version__"]
