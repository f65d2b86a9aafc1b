"""Exact solver for the discrimination-penalized selection problem.

Relative to the utility-maximizing (UM) policy, any optimal policy can be
written as a set of "corrections": forgo selecting some positively qualified
members of the advantaged group ``A``, or select some negatively qualified
members of ``B``. Each unit of correction mass lowers the disparity by one
unit and costs ``p(c) * |y|`` in utility. Filling corrections cheapest-first
gives a convex piecewise-linear cost curve ``C(Z)`` in the total correction
mass ``Z``, and the problem collapses to maximizing the concave function

    F(Z) = u_UM - C(Z) - lam * g(delta_UM - Z),    0 <= Z <= delta_UM.

The solver enumerates the breakpoints of ``C`` and bisects for the
stationarity crossing inside each segment, so kinks are hit exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import (
    PenaltySpec,
    PopulationState,
    SelectionPolicy,
    utility_max_policy,
)

GROUP_A = "A"
GROUP_B = "B"
BISECT_TOL = 1e-12
TIE_TOL = 1e-12


class ThresholdUndefined(ValueError):
    """Raised when a threshold is requested for a population with delta_UM = 0."""


@dataclass(frozen=True)
class ReductionItem:
    qualification: float
    group: str
    unit_cost: float
    capacity: float
    index: int  # position in the grid


@dataclass(frozen=True, eq=False)
class CostCurve:
    """Cheapest-first cumulative correction cost.

    ``masses[k]`` / ``costs[k]`` are the k-th breakpoint; ``slopes[k]`` is the
    unit cost on ``[masses[k], masses[k+1]]``.
    """

    items: tuple[ReductionItem, ...]
    masses: np.ndarray
    costs: np.ndarray
    slopes: np.ndarray

    @classmethod
    def from_items(cls, items: Sequence[ReductionItem]) -> "CostCurve":
        caps = np.array([it.capacity for it in items], dtype=float)
        slopes = np.array([it.unit_cost for it in items], dtype=float)
        masses = np.concatenate([[0.0], np.cumsum(caps)])
        costs = np.concatenate([[0.0], np.cumsum(caps * slopes)])
        return cls(tuple(items), masses, costs, slopes)

    @property
    def breakpoints(self) -> list[tuple[float, float]]:
        return list(zip(self.masses.tolist(), self.costs.tolist()))

    def cost(self, z: float) -> float:
        k = int(np.searchsorted(self.masses, z, side="right")) - 1
        k = min(max(k, 0), len(self.slopes) - 1)
        return float(self.costs[k] + self.slopes[k] * (z - self.masses[k]))

    def allocate(self, z: float) -> np.ndarray:
        """Greedy fill of total mass ``z`` in item order."""
        out = np.zeros(len(self.items))
        remaining = z
        for k, it in enumerate(self.items):
            if remaining <= 0:
                break
            take = min(it.capacity, remaining)
            out[k] = take
            remaining -= take
        return out


@dataclass(frozen=True, eq=False)
class StaticSolution:
    z_allocation: dict
    total_mass: float
    delta: float
    objective: float
    policy: SelectionPolicy
    swapped: bool
    u_um: float = 0.0
    delta_um: float = 0.0
    correction_cost: float = 0.0
    beta_e: float | None = None
    beta_s: float | None = None

    def __post_init__(self):
        for name in ("total_mass", "delta", "objective", "u_um", "delta_um", "correction_cost"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("beta_e", "beta_s"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, float(v))

    @property
    def utility(self) -> float:
        return self.u_um - self.correction_cost

    def to_dict(self) -> dict:
        return {
            "z_allocation": [
                {"qualification": y, "group": c, "mass": m}
                for (y, c), m in sorted(self.z_allocation.items())
            ],
            "total_mass": self.total_mass,
            "delta": self.delta,
            "objective": self.objective,
            "utility": self.utility,
            "u_um": self.u_um,
            "delta_um": self.delta_um,
            "beta_e": self.beta_e,
            "beta_s": self.beta_s,
            "swapped": self.swapped,
            "policy": self.policy.to_dict(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# -- orientation and the UM baseline ----------------------------------------

def positive_mass(state: PopulationState) -> tuple[float, float]:
    pos = state.grid.positive
    return float(state.dist_a[pos].sum()), float(state.dist_b[pos].sum())


def normalize_orientation(state: PopulationState) -> tuple[PopulationState, bool]:
    """Relabel groups so that Pr(Y>0|A) >= Pr(Y>0|B); ties keep the labels."""
    pa, pb = positive_mass(state)
    if pa < pb:
        return state.swapped(), True
    return state, False


def utility_max(state: PopulationState) -> tuple[float, float, SelectionPolicy]:
    pos = state.grid.positive
    y = state.values
    u = state.weight_a * float(np.dot(state.dist_a[pos], y[pos])) + state.weight_b * float(
        np.dot(state.dist_b[pos], y[pos])
    )
    pa, pb = positive_mass(state)
    return u, abs(pa - pb), utility_max_policy(state.grid)


def reduction_items(state: PopulationState) -> list[ReductionItem]:
    """Correction items of a normalized state, cheapest first.

    Ties in cost go to group A first, then to the lower qualification.
    """
    items = []
    for i, y in enumerate(state.values.tolist()):
        if y > 0 and state.dist_a[i] > 0:
            items.append(ReductionItem(y, GROUP_A, state.weight_a * abs(y), float(state.dist_a[i]), i))
        elif y < 0 and state.dist_b[i] > 0:
            items.append(ReductionItem(y, GROUP_B, state.weight_b * abs(y), float(state.dist_b[i]), i))
    items.sort(key=lambda it: (it.unit_cost, it.group != GROUP_A, it.qualification))
    return items


def _prepare(state: PopulationState):
    norm, swapped = normalize_orientation(state)
    u_um, delta_um, _ = utility_max(norm)
    return norm, swapped, u_um, delta_um


def _require_positive_gap(delta_um: float) -> None:
    if not delta_um > 0:
        raise ThresholdUndefined("threshold undefined: delta_UM = 0, no tension between utility and parity")


def cost_curve(state: PopulationState) -> CostCurve:
    norm, _, _, delta_um = _prepare(state)
    items = reduction_items(norm)
    if delta_um > 0:
        assert items, "empty correction set with delta_UM > 0"
    return CostCurve.from_items(items)


# -- policy reconstruction ---------------------------------------------------

def _build_solution(norm, swapped, u_um, delta_um, curve, z_total, penalty, lam) -> StaticSolution:
    alloc = curve.allocate(z_total) if curve.items else np.zeros(0)
    y = norm.values
    sel_a = (y > 0).astype(float)
    sel_b = (y > 0).astype(float)
    z_map = {}
    spent = 0.0
    for it, z in zip(curve.items, alloc):
        if z <= 0:
            continue
        spent += z * it.unit_cost
        if it.group == GROUP_A:
            sel_a[it.index] = min(max(1.0 - z / it.capacity, 0.0), 1.0)
        else:
            sel_b[it.index] = min(max(z / it.capacity, 0.0), 1.0)
        label = it.group
        if swapped:
            label = GROUP_B if it.group == GROUP_A else GROUP_A
        z_map[(it.qualification, label)] = float(z)
    total = float(alloc.sum())
    delta = max(delta_um - total, 0.0)
    objective = u_um - spent
    if lam != 0 and penalty is not None:
        objective -= lam * float(penalty(delta))
    policy = SelectionPolicy(sel_a, sel_b)
    if swapped:
        policy = policy.swapped()
    return StaticSolution(
        z_allocation=z_map,
        total_mass=total,
        delta=delta,
        objective=objective,
        policy=policy,
        swapped=swapped,
        u_um=u_um,
        delta_um=delta_um,
        correction_cost=spent,
    )


# -- thresholds --------------------------------------------------------------

def beta_e(state: PopulationState) -> float:
    """Smallest unit cost of a correction; the effectiveness threshold."""
    norm, _, _, delta_um = _prepare(state)
    _require_positive_gap(delta_um)
    items = reduction_items(norm)
    assert items, "empty correction set with delta_UM > 0"
    return items[0].unit_cost


def solve_dp_constrained(state: PopulationState) -> StaticSolution:
    """Best policy subject to exact demographic parity."""
    norm, swapped, u_um, delta_um = _prepare(state)
    if delta_um == 0:
        return _build_solution(norm, swapped, u_um, 0.0, CostCurve.from_items([]), 0.0, None, 0.0)
    curve = CostCurve.from_items(reduction_items(norm))
    sol = _build_solution(norm, swapped, u_um, delta_um, curve, delta_um, None, 0.0)
    # the fill covers delta_UM exactly up to rounding in the cumulative sum
    return replace(sol, delta=0.0, **_thresholds(curve, delta_um))


def _beta_s_from_curve(curve: CostCurve, delta_um: float) -> float:
    alloc = curve.allocate(delta_um)
    return max(it.unit_cost for it, z in zip(curve.items, alloc) if z > 0)


def _thresholds(curve: CostCurve, delta_um: float) -> dict:
    return {"beta_e": curve.items[0].unit_cost, "beta_s": _beta_s_from_curve(curve, delta_um)}


def beta_s(state: PopulationState) -> float:
    """Largest unit cost used by the parity-constrained optimum."""
    norm, _, _, delta_um = _prepare(state)
    _require_positive_gap(delta_um)
    return _beta_s_from_curve(CostCurve.from_items(reduction_items(norm)), delta_um)


def is_effective(state: PopulationState, penalty: PenaltySpec, lam: float) -> bool:
    _, _, _, delta_um = _prepare(state)
    return beta_e(state) < lam * penalty.left_derivative(delta_um)


def is_fully_satisfactory(state: PopulationState, penalty: PenaltySpec, lam: float) -> bool:
    _, _, _, delta_um = _prepare(state)
    if delta_um == 0:
        return True
    return beta_s(state) <= lam * penalty.right_derivative(0.0)


def min_lambda_effective(state: PopulationState, penalty: PenaltySpec) -> float:
    """Infimum of effective lambdas. The infimum itself is not effective."""
    _, _, _, delta_um = _prepare(state)
    d = penalty.left_derivative(delta_um)
    b = beta_e(state)
    return b / d if d > 0 else math.inf


def min_lambda_satisfactory(state: PopulationState, penalty: PenaltySpec) -> float:
    """Smallest fully satisfactory lambda (attained)."""
    b = beta_s(state)
    d = penalty.right_derivative(0.0)
    return b / d if d > 0 else math.inf


# -- the penalized problem ---------------------------------------------------

def _objective_fn(u_um, delta_um, curve, penalty, lam):
    def f(z):
        return u_um - curve.cost(z) - lam * float(penalty(max(delta_um - z, 0.0)))

    return f


def _segment_crossing(a, b, slope, delta_um, penalty, lam):
    """Largest z in [a, b] where the right-slope of F is still positive."""
    lo, hi = a, b
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if lam * penalty.left_derivative(max(delta_um - mid, 0.0)) - slope > 0:
            lo = mid
        else:
            hi = mid
    return lo, hi


def _candidates(u_um, delta_um, curve, penalty, lam):
    f = _objective_fn(u_um, delta_um, curve, penalty, lam)
    zs = {0.0, delta_um}
    for k, slope in enumerate(curve.slopes):
        a = float(curve.masses[k])
        if a >= delta_um:
            break
        b = min(float(curve.masses[k + 1]), delta_um)
        zs.add(a)
        zs.add(b)
        # F'_+(a) > 0 and F'_-(b) < 0 brackets an interior maximum
        rising = lam * penalty.left_derivative(max(delta_um - a, 0.0)) - slope > 0
        falling = lam * penalty.right_derivative(max(delta_um - b, 0.0)) - slope < 0
        if rising and falling:
            lo, hi = _segment_crossing(a, b, slope, delta_um, penalty, lam)
            zs.update((lo, hi))
    return sorted((z, f(z)) for z in zs)


def select_maximizer(cands: list[tuple[float, float]], delta_um: float) -> float:
    """Pick among near-optimal candidates (within TIE_TOL of the best).

    Full parity wins if it is optimal; otherwise the UM point if it is
    optimal; otherwise the largest optimal Z. The choice is nondecreasing in
    lambda, and it agrees with is_effective and is_fully_satisfactory at
    their boundary values.
    """
    best = max(f for _, f in cands)
    optimal = [z for z, f in cands if f >= best - TIE_TOL]
    z_hi, z_lo = max(optimal), min(optimal)
    if z_hi >= delta_um:
        return delta_um
    if z_lo <= 0.0:
        return 0.0
    return z_hi


def solve_penalized(state: PopulationState, penalty: PenaltySpec, lam: float) -> StaticSolution:
    """Maximize E[DY] - lam * g(disparity) over all selection policies."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    norm, swapped, u_um, delta_um = _prepare(state)
    if delta_um == 0 or lam == 0:
        # every correction has positive cost, so Z = 0 is the unique optimum
        return _build_solution(norm, swapped, u_um, delta_um, CostCurve.from_items([]), 0.0, penalty, lam)
    curve = CostCurve.from_items(reduction_items(norm))
    cands = _candidates(u_um, delta_um, curve, penalty, lam)
    z = select_maximizer(cands, delta_um)
    sol = _build_solution(norm, swapped, u_um, delta_um, curve, z, penalty, lam)
    if z >= delta_um:
        sol = replace(sol, delta=0.0, objective=u_um - sol.correction_cost - lam * float(penalty(0.0)))
    return replace(sol, **_thresholds(curve, delta_um))


def oracle_solve(state: PopulationState, penalty: PenaltySpec, lam: float, step: float) -> tuple[float, float]:
    """Brute-force grid search over total correction mass.

    Independent of the breakpoint/bisection path: builds its own
    cheapest-first cost table and evaluates F on ``{0, step, ..., delta_UM}``.
    Returns ``(objective, delta)`` at the best grid point.
    """
    if not step > 0:
        raise ValueError("step must be > 0")
    pa, pb = positive_mass(state)
    if pa < pb:
        state = state.swapped()
    y = state.values
    u_um = state.weight_a * float(np.sum(state.dist_a * np.maximum(y, 0))) + state.weight_b * float(
        np.sum(state.dist_b * np.maximum(y, 0))
    )
    delta_um = abs(pa - pb)
    if delta_um == 0:
        return u_um, 0.0
    costs = np.concatenate([state.weight_a * np.abs(y[y > 0]), state.weight_b * np.abs(y[y < 0])])
    caps = np.concatenate([state.dist_a[y > 0], state.dist_b[y < 0]])
    order = np.argsort(costs, kind="stable")
    costs, caps = costs[order], caps[order]
    cum_mass = np.concatenate([[0.0], np.cumsum(caps)])
    cum_cost = np.concatenate([[0.0], np.cumsum(caps * costs)])
    zs = np.arange(0.0, delta_um, step)
    zs = np.append(zs, delta_um)
    c = np.interp(zs, cum_mass, cum_cost)
    gap = np.maximum(delta_um - zs, 0.0)
    try:
        g = np.asarray(penalty(gap), dtype=float)
        if g.shape != gap.shape:
            raise ValueError
    except (TypeError, ValueError):
        g = np.array([float(penalty(float(x))) for x in gap])
    values = u_um - c - lam * g
    k = int(np.argmax(values))
    return float(values[k]), float(gap[k])


def check_policy_structure(state: PopulationState, policy: SelectionPolicy, tol: float = 1e-9) -> list[str]:
    """List the ways ``policy`` departs from the structure every optimum has.

    Checks, on levels with positive mass: monotone selection within each
    group, at most one fractional level per group, the advantaged group's
    rate is not smaller, and the UM decision on "free" levels (A never takes
    y<0, B always takes y>0). The state is normalized first.
    """
    norm, swapped = normalize_orientation(state)
    if swapped:
        policy = policy.swapped()
    y = norm.values
    out = []
    for name, dist, sel in (("A", norm.dist_a, policy.select_prob_a), ("B", norm.dist_b, policy.select_prob_b)):
        live = np.flatnonzero(dist > 0)
        s = sel[live]
        drops = np.flatnonzero(np.diff(s) < -tol)
        for k in drops:
            out.append(
                f"group {name}: selection decreases from y={y[live[k]]:g} ({s[k]:g}) to y={y[live[k + 1]]:g} ({s[k + 1]:g})"
            )
        frac = live[(sel[live] > tol) & (sel[live] < 1 - tol)]
        if frac.size > 1:
            out.append(f"group {name}: {frac.size} levels with fractional selection ({y[frac].tolist()})")
    rate_a = float(np.dot(norm.dist_a, policy.select_prob_a))
    rate_b = float(np.dot(norm.dist_b, policy.select_prob_b))
    if rate_a < rate_b - tol:
        out.append(f"advantaged group selected less often ({rate_a:g} < {rate_b:g})")
    bad_a = np.flatnonzero((y < 0) & (norm.dist_a > 0) & (policy.select_prob_a > tol))
    for i in bad_a:
        out.append(f"group A selects negative qualification y={y[i]:g}")
    bad_b = np.flatnonzero((y > 0) & (norm.dist_b > 0) & (policy.select_prob_b < 1 - tol))
    for i in bad_b:
        out.append(f"group B rejects positive qualification y={y[i]:g}")
    return out


def sweep(state: PopulationState, penalty: PenaltySpec, lambdas: Sequence[float]) -> list[StaticSolution]:
    return [solve_penalized(state, penalty, lam) for lam in lambdas]
