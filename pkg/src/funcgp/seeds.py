"""Sub-seed derivation.

A single top-level seed drives every random choice in a run.  Each consumer
(simulation draws, subset-of-data sampling, subset-of-regressors sampling,
optimizer restarts) gets its own stream derived by a fixed offset, so that
e.g. enabling subsampling does not shift the restart initializations.
"""

import numpy as np

SIMULATE_OFFSET = 101
SOD_OFFSET = 211
SOR_OFFSET = 307
RESTART_OFFSET = 401


def rng_for(seed: int, offset: int) -> np.random.Generator:
    """Generator for one consumer of the top-level ``seed``."""
    return np.random.default_rng(int(seed) + offset)
