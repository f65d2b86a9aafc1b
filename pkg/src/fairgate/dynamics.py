"""Population dynamics under a myopic, re-optimizing institution.

At each time step the institution solves the penalized selection problem on
the current population. Individuals then move between qualification levels
according to a kernel that depends only on their current level and on
whether they were selected. Group identity never enters the kernel.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .core import (
    PROB_TOL,
    PenaltySpec,
    PopulationState,
    QualificationGrid,
    SelectionPolicy,
    ValidationError,
    linear,
    utility_max_policy,
)
from .solver import solve_penalized


def _check_stochastic(name: str, mat, n: int) -> np.ndarray:
    arr = np.array(mat, dtype=float)
    if arr.shape != (n, n):
        raise ValidationError(f"{name} has shape {arr.shape}, expected ({n}, {n})")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains a non-finite entry")
    neg = np.argwhere(arr < -PROB_TOL)
    if neg.size:
        i, j = neg[0]
        raise ValidationError(f"{name}[{i}, {j}] = {arr[i, j]} is negative")
    arr[arr < 0] = 0.0
    sums = arr.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > PROB_TOL)
    if bad.size:
        raise ValidationError(f"{name} row {bad[0]} sums to {sums[bad[0]]!r}, expected 1")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DynamicsKernel:
    """Transition law over the qualification grid.

    Row ``i`` of ``q_selected`` is the next-level distribution of someone at
    level ``grid[i]`` who was selected; ``q_rejected`` likewise for rejection.
    """

    grid: QualificationGrid
    q_selected: np.ndarray
    q_rejected: np.ndarray

    def __post_init__(self):
        grid = self.grid if isinstance(self.grid, QualificationGrid) else QualificationGrid(self.grid)
        n = len(grid)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "q_selected", _check_stochastic("q_selected", self.q_selected, n))
        object.__setattr__(self, "q_rejected", _check_stochastic("q_rejected", self.q_rejected, n))

    @property
    def n(self) -> int:
        return len(self.grid)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "q_selected": self.q_selected.tolist(),
            "q_rejected": self.q_rejected.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DynamicsKernel":
        missing = {"grid", "q_selected", "q_rejected"} - set(data)
        if missing:
            raise ValidationError(f"kernel document missing keys: {sorted(missing)}")
        return cls(QualificationGrid(data["grid"]), data["q_selected"], data["q_rejected"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DynamicsKernel":
        return cls.from_dict(json.loads(text))


def _check_grid(state: PopulationState, kernel: DynamicsKernel) -> None:
    if state.grid != kernel.grid:
        raise ValidationError(
            f"grid mismatch: population {state.grid.tolist()} vs kernel {kernel.grid.tolist()}"
        )


def _advance(dist: np.ndarray, sel: np.ndarray, kernel: DynamicsKernel) -> np.ndarray:
    out = (dist * sel) @ kernel.q_selected + (dist * (1.0 - sel)) @ kernel.q_rejected
    out = np.maximum(out, 0.0)
    return out / out.sum()


def step(state: PopulationState, policy: SelectionPolicy, kernel: DynamicsKernel) -> PopulationState:
    """Push both groups through one round of selection and transition."""
    _check_grid(state, kernel)
    return PopulationState(
        state.grid,
        state.weight_a,
        _advance(state.dist_a, policy.select_prob_a, kernel),
        _advance(state.dist_b, policy.select_prob_b, kernel),
    )


def tv_distance(a, b) -> float:
    """Sum of absolute differences (range [0, 2])."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


@dataclass
class TrajectoryRecord:
    """Per-step metrics of a simulation; entry ``t`` describes the state at time ``t``."""

    delta: list[float] = field(default_factory=list)
    profit: list[float] = field(default_factory=list)
    utility: list[float] = field(default_factory=list)
    tv: list[float] = field(default_factory=list)
    policies: list[SelectionPolicy] = field(default_factory=list)
    states: dict[int, PopulationState] = field(default_factory=dict)
    final_state: PopulationState | None = None
    converged: bool = False

    def __len__(self) -> int:
        return len(self.delta)

    def rows(self):
        for t in range(len(self)):
            yield t, self.delta[t], self.profit[t], self.utility[t], self.tv[t]

    def to_table(self) -> str:
        lines = ["t delta profit utility tv"]
        for t, d, p, u, v in self.rows():
            lines.append(f"{t} {d!r} {p!r} {u!r} {v!r}")
        return "\n".join(lines) + "\n"


def simulate(
    initial: PopulationState,
    kernel: DynamicsKernel,
    penalty: PenaltySpec,
    lam: float,
    t_max: int,
    convergence_tol: float = 1e-12,
    keep_every: int = 1,
) -> TrajectoryRecord:
    """Run the myopic dynamics for up to ``t_max`` steps.

    Stops early once neither group's distribution moves by more than
    ``convergence_tol`` (total variation) in one step. States are kept every
    ``keep_every`` steps (0 keeps none); the final state is always kept.
    """
    _check_grid(initial, kernel)
    rec = TrajectoryRecord()
    state = initial
    for t in range(t_max):
        sol = solve_penalized(state, penalty, lam)
        rec.delta.append(sol.delta)
        rec.profit.append(sol.objective)
        rec.utility.append(sol.utility)
        rec.tv.append(tv_distance(state.dist_a, state.dist_b))
        rec.policies.append(sol.policy)
        if keep_every and t % keep_every == 0:
            rec.states[t] = state
        nxt = step(state, sol.policy, kernel)
        moved = max(tv_distance(nxt.dist_a, state.dist_a), tv_distance(nxt.dist_b, state.dist_b))
        state = nxt
        if moved < convergence_tol:
            rec.converged = True
            break
    rec.final_state = state
    return rec


def contraction_factor(kernel: DynamicsKernel) -> tuple[float, float, bool]:
    """Return ``(alpha, 2 * (1 - alpha * n), alpha > 1 / (2n))``."""
    alpha = float(min(kernel.q_selected.min(), kernel.q_rejected.min()))
    n = kernel.n
    return alpha, 2.0 * (1.0 - alpha * n), alpha > 1.0 / (2 * n)


def um_transition(kernel: DynamicsKernel) -> np.ndarray:
    """Single-group transition matrix when exactly the positives are selected."""
    pos = kernel.grid.positive
    return np.where(pos[:, None], kernel.q_selected, kernel.q_rejected)


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Stationary law of an irreducible chain via a direct linear solve.

    Solves ``(P^T - I) pi = 0`` with a normalization row appended.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.maximum(pi, 0.0)
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class StationaryState:
    distribution: np.ndarray
    policy: SelectionPolicy

    def residual(self, kernel: DynamicsKernel, weight_a: float = 0.5) -> float:
        """TV movement of one step from (distribution, distribution) under the solver's policy."""
        state = PopulationState(kernel.grid, weight_a, self.distribution, self.distribution)
        # identical groups leave no tension, so any penalty yields the UM policy
        sol = solve_penalized(state, linear(), 1.0)
        nxt = step(state, sol.policy, kernel)
        return max(tv_distance(nxt.dist_a, state.dist_a), tv_distance(nxt.dist_b, state.dist_b))


def recurrent_classes(P: np.ndarray) -> list[np.ndarray]:
    """Closed communicating classes of the positive-entry graph of ``P``."""
    adj = (np.asarray(P) > 0).astype(int)
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    classes = []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        outside = np.setdiff1d(np.arange(P.shape[0]), members)
        if not adj[np.ix_(members, outside)].any():
            classes.append(members)
    return classes


def stationary_candidates(kernel: DynamicsKernel) -> list[StationaryState]:
    """One equal-groups stationary state per recurrent class of the UM chain."""
    T = um_transition(kernel)
    policy = utility_max_policy(kernel.grid)
    out = []
    for members in recurrent_classes(T):
        sub = T[np.ix_(members, members)]
        pi = np.zeros(kernel.n)
        pi[members] = stationary_distribution(sub)
        pi.setflags(write=False)
        out.append(StationaryState(pi, policy))
    return out


def check_birth_death(kernel: DynamicsKernel) -> tuple[bool, bool, bool]:
    """Check the band-support and selection-monotonicity conditions.

    ``band_ok``: an entry is positive exactly when it is on the tridiagonal,
    in both matrices. ``monotone_ok``: selection never lowers the chance of
    moving up one level nor raises the chance of moving down one level.
    """
    n = kernel.n
    i, j = np.indices((n, n))
    band = np.abs(i - j) <= 1
    band_ok = all(np.array_equal(m > 0, band) for m in (kernel.q_selected, kernel.q_rejected))
    up = np.arange(n - 1)
    down = np.arange(1, n)
    monotone_ok = bool(
        np.all(kernel.q_selected[up, up + 1] >= kernel.q_rejected[up, up + 1])
        and np.all(kernel.q_selected[down, down - 1] <= kernel.q_rejected[down, down - 1])
    )
    return band_ok, monotone_ok, band_ok and monotone_ok


def birth_death_stationary(P) -> np.ndarray:
    """Closed-form stationary law of a tridiagonal chain (product of up/down ratios)."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n):
        raise ValueError("transition matrix must be square")
    i, j = np.indices((n, n))
    if np.any(P[np.abs(i - j) > 1] != 0):
        raise ValueError("transition matrix is not tridiagonal")
    up = np.diagonal(P, 1)
    down = np.diagonal(P, -1)
    zero = np.flatnonzero(down <= 0)
    if zero.size:
        k = zero[0]
        raise ValueError(f"sub-diagonal entry P[{k + 1}, {k}] is zero; ratio undefined")
    weights = np.concatenate([[1.0], np.cumprod(up / down)])
    return weights / weights.sum()


def check_growth_condition(kernel: DynamicsKernel) -> bool:
    """Does selection raise expected qualification at every level?

    Equality counts as growth; a 1e-12 slack absorbs rounding in the row sums.
    """
    y = kernel.grid.values
    return bool(np.all(kernel.q_selected @ y >= y - 1e-12))
