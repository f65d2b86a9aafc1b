"""Shared random-instance builders for the test suite."""
from __future__ import annotations

import numpy as np

from fairgate.core import PopulationState, QualificationGrid
from fairgate.genlab import rng_for


def random_grid(rng: np.random.Generator, n: int, min_abs: float = 0.1, spread: float = 3.0) -> QualificationGrid:
    """``n`` distinct levels with at least one of each sign and |y| >= min_abs."""
    while True:
        mags = rng.uniform(min_abs, spread, n)
        signs = rng.choice([-1.0, 1.0], n)
        vals = np.unique(np.round(signs * mags, 6))
        if len(vals) == n and vals.min() < 0 < vals.max():
            return QualificationGrid(vals)


def random_state(rng: np.random.Generator, n: int | None = None, grid=None) -> PopulationState:
    if grid is None:
        grid = random_grid(rng, n if n is not None else int(rng.integers(2, 6)))
    k = len(grid)
    return PopulationState(grid, float(rng.uniform(0.1, 0.9)), rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k)))


def seeded_state(seed: int, n: int | None = None) -> PopulationState:
    return random_state(rng_for(seed), n)


# filled by the acceptance module, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []
