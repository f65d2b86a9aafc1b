"""Seeded generators for synthetic dynamics.

Every generator is a pure function of its seed and parameters. Randomness
comes from numpy's ``PCG64`` bit generator through ``default_rng``; the
algorithm identifier below is recorded in every experiment manifest.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import QualificationGrid, ValidationError
from .dynamics import DynamicsKernel

GENERATOR_VERSION = "numpy-PCG64/default_rng/v1"


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class BandKernelParams:
    """Up/down move probabilities for selected (1) and rejected (0) individuals."""

    q1_up: float
    q1_down: float
    q0_up: float
    q0_down: float

    def __post_init__(self):
        vals = asdict(self)
        for name, v in vals.items():
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} = {v} outside [0, 1]")
        if self.q1_up + self.q1_down > 1.0 + 1e-12:
            raise ValidationError("q1_up + q1_down exceeds 1")
        if self.q0_up + self.q0_down > 1.0 + 1e-12:
            raise ValidationError("q0_up + q0_down exceeds 1")
        if self.q0_down < self.q1_down:
            raise ValidationError("selection must not raise the chance of moving down (q0_down < q1_down)")
        if self.q1_up < self.q0_up:
            raise ValidationError("selection must not lower the chance of moving up (q1_up < q0_up)")

    def to_dict(self) -> dict:
        return asdict(self)


def sample_band_params(seed: int) -> BandKernelParams:
    """Chained uniform draws that satisfy the band ordering by construction."""
    rng = rng_for(seed)
    q1_up = rng.uniform(0.0, 1.0)
    q1_down = rng.uniform(0.0, 1.0 - q1_up)
    q0_up = rng.uniform(0.0, q1_up)
    q0_down = rng.uniform(q1_down, 1.0 - q0_up)
    return BandKernelParams(float(q1_up), float(q1_down), float(q0_up), float(q0_down))


def _band_matrix(up: float, down: float, n: int) -> np.ndarray:
    m = np.zeros((n, n))
    for i in range(n):
        stay = 1.0
        if i + 1 < n:
            m[i, i + 1] = up
            stay -= up
        if i > 0:
            m[i, i - 1] = down
            stay -= down
        # boundary rows fold the impossible move into staying put
        m[i, i] = stay
    return m


def band_kernel(params: BandKernelParams, grid) -> DynamicsKernel:
    grid = grid if isinstance(grid, QualificationGrid) else QualificationGrid(grid)
    n = len(grid)
    return DynamicsKernel(
        grid,
        _band_matrix(params.q1_up, params.q1_down, n),
        _band_matrix(params.q0_up, params.q0_down, n),
    )


def _simplex_rows(rng: np.random.Generator, shape) -> np.ndarray:
    draws = rng.standard_exponential(shape)
    while np.any(draws <= 0):
        bad = draws <= 0
        draws[bad] = rng.standard_exponential(int(bad.sum()))
    return draws / draws.sum(axis=-1, keepdims=True)


def random_kernel(seed: int, grid) -> DynamicsKernel:
    """Every row drawn uniformly from the open probability simplex."""
    grid = grid if isinstance(grid, QualificationGrid) else QualificationGrid(grid)
    n = len(grid)
    rows = _simplex_rows(rng_for(seed), (2, n, n))
    return DynamicsKernel(grid, rows[0], rows[1])


def perturb_kernel(kernel: DynamicsKernel, sigma: float, seed: int) -> DynamicsKernel:
    """Add N(0, sigma^2) noise entrywise, take absolute values, renormalize rows."""
    if sigma < 0:
        raise ValidationError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return kernel
    rng = rng_for(seed)
    out = []
    for mat in (kernel.q_selected, kernel.q_rejected):
        noisy = np.abs(mat + rng.normal(0.0, sigma, mat.shape))
        for i in range(noisy.shape[0]):
            while noisy[i].sum() == 0:
                noisy[i] = np.abs(mat[i] + rng.normal(0.0, sigma, mat.shape[1]))
        out.append(noisy / noisy.sum(axis=1, keepdims=True))
    return DynamicsKernel(kernel.grid, out[0], out[1])


def random_growth_kernel(seed: int, grid) -> DynamicsKernel:
    """Random kernel whose selected rows never lower expected qualification.

    Each selected row is mixed with a point mass on the top level just enough
    to lift its mean to the current level; rejected rows are unconstrained.
    """
    grid = grid if isinstance(grid, QualificationGrid) else QualificationGrid(grid)
    y = grid.values
    n = len(grid)
    rows = _simplex_rows(rng_for(seed), (2, n, n))
    sel = rows[0]
    for i in range(n):
        mean = float(sel[i] @ y)
        if mean < y[i]:
            w = (y[i] - mean) / (y[-1] - mean)
            w = min(1.0, w * (1 + 1e-9) + 1e-15)
            sel[i] = (1 - w) * sel[i]
            sel[i, -1] += w
    return DynamicsKernel(grid, sel, rows[1])


def random_band_kernel(seed: int, grid) -> DynamicsKernel:
    """Tridiagonal kernel with every row drawn flat on its band support.

    Unlike ``band_kernel`` the up/stay/down probabilities vary by level and by
    decision, with no ordering between the selected and rejected matrices.
    """
    grid = grid if isinstance(grid, QualificationGrid) else QualificationGrid(grid)
    n = len(grid)
    rng = rng_for(seed)
    mats = []
    for _ in range(2):
        m = np.zeros((n, n))
        for i in range(n):
            lo, hi = max(i - 1, 0), min(i + 2, n)
            m[i, lo:hi] = _simplex_rows(rng, (hi - lo,))
        mats.append(m)
    return DynamicsKernel(grid, mats[0], mats[1])
