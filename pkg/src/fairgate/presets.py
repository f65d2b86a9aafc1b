"""Named populations and kernels used by examples, tests and the CLI."""
from __future__ import annotations

import numpy as np

from .core import PopulationState, QualificationGrid
from .dynamics import DynamicsKernel

THREE_LEVEL_GRID = (-2.0, -1.0, 2.0)

# Synthetic stand-in for the LSAC snapshot: group sizes match the published
# counts, the GPA histograms are discretized normals (not the real data).
LSAC_WHITE = 17921
LSAC_NONWHITE = 3485
LSAC_OFFSET = 2.95


def three_level_state() -> PopulationState:
    """Two equal groups on levels (-2, -1, +2)."""
    return PopulationState(QualificationGrid(THREE_LEVEL_GRID), 0.5, [0.3, 0.1, 0.6], [0.5, 0.1, 0.4])


def discouragement_kernel() -> DynamicsKernel:
    """Three-level dynamics in which selection at level -1 discourages.

    Being selected at level -1 mostly pushes the individual down to -2, while
    being rejected there mostly lifts them to +2. All other rows coincide.
    """
    q_selected = [
        [0.8, 0.1, 0.1],
        [0.8, 0.1, 0.1],
        [0.1, 0.1, 0.8],
    ]
    q_rejected = [
        [0.8, 0.1, 0.1],
        [0.1, 0.1, 0.8],
        [0.1, 0.1, 0.8],
    ]
    return DynamicsKernel(QualificationGrid(THREE_LEVEL_GRID), q_selected, q_rejected)


def _binned_normal(gpas: np.ndarray, mean: float, sd: float) -> np.ndarray:
    w = np.exp(-0.5 * ((gpas - mean) / sd) ** 2)
    return w / w.sum()


def lsac_like_state(gpa_min: float = 2.0, gpa_max: float = 4.0) -> PopulationState:
    """A population shaped like the LSAC GPA snapshot.

    GPAs on a 0.1 grid are shifted by 2.95, so every qualification is an odd
    multiple of 0.05 and none is zero.
    """
    k = np.arange(round(gpa_min * 10), round(gpa_max * 10) + 1)
    gpas = k / 10.0
    grid = (k - 29.5) / 10.0
    weight_a = LSAC_WHITE / (LSAC_WHITE + LSAC_NONWHITE)
    return PopulationState(
        QualificationGrid(grid),
        weight_a,
        _binned_normal(gpas, 3.25, 0.38),
        _binned_normal(gpas, 2.98, 0.42),
    )
