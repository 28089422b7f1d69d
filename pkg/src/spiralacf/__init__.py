"""Numerical construction of a spiraling two-phase ACF counterexample.

The package builds a finite truncation of a spiral interface made of
Schwarz-Christoffel "turn" pieces, solves the harmonic phases on it by
walk-on-spheres, and checks the monotone ACF functional and the
nonuniqueness of blow-up normals along the construction.
"""

__version__ = "0.1.0"
