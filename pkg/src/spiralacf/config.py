"""Run-wide constants and the measured working angle theta0."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

# theta0 is accepted only where the lemma margin exceeds this
THETA0_MARGIN = 1e-6
DEFAULT_THETA_GRID = tuple(np.round(np.arange(0.01, 1.5701, 0.01), 10))


@lru_cache(maxsize=1)
def measured_theta0() -> float:
    """Largest grid angle up to which every angle lemma certifies (computed once)."""
    from .lemmas import working_theta0

    return working_theta0(DEFAULT_THETA_GRID)

# half-width M of the notched domain used by every theta-turn
DEFAULT_M = 3.0
# ratio between consecutive radii of the harmonic level hierarchy
LEVEL_RATIO = 10.0 ** (-1.0 / 6.0)
# vertices closer than this (unit-ball scale) are treated as equal
VERTEX_TOL = 1e-10
