import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from fairgate.core import (
    PopulationState,
    SelectionPolicy,
    disparity,
    exponential,
    hinge,
    linear,
    profit,
    quadratic,
    utility,
)
from fairgate.genlab import rng_for
from fairgate.presets import three_level_state
from fairgate.solver import (
    ThresholdUndefined,
    beta_e,
    beta_s,
    check_policy_structure,
    cost_curve,
    is_effective,
    is_fully_satisfactory,
    min_lambda_effective,
    min_lambda_satisfactory,
    normalize_orientation,
    oracle_solve,
    reduction_items,
    solve_dp_constrained,
    solve_penalized,
    sweep,
    utility_max,
)
from helpers import random_state

GRID = [-2.0, -1.0, 2.0]


def swapped_three_level():
    return three_level_state().swapped()


def lp_linear_penalty(state: PopulationState, lam: float, parity: bool = False):
    """Maximize E[DY] - lam * |rate_A - rate_B| as an LP over raw selection probabilities."""
    n = len(state.grid)
    y = state.values
    # variables: s_A (n), s_B (n), t
    c = np.concatenate([-state.weight_a * state.dist_a * y, -state.weight_b * state.dist_b * y, [lam]])
    diff = np.concatenate([state.dist_a, -state.dist_b, [0.0]])
    if parity:
        res = linprog(c, A_eq=diff[None, :], b_eq=[0.0], bounds=[(0, 1)] * (2 * n) + [(0, 0)], method="highs")
    else:
        A = np.vstack([diff - np.eye(2 * n + 1)[-1], -diff - np.eye(2 * n + 1)[-1]])
        res = linprog(c, A_ub=A, b_ub=[0.0, 0.0], bounds=[(0, 1)] * (2 * n) + [(0, None)], method="highs")
    assert res.success
    return -res.fun


# -- orientation and baseline --------------------------------------------------

def test_orientation():
    norm, swapped = normalize_orientation(three_level_state())
    assert not swapped and np.array_equal(norm.dist_a, [0.3, 0.1, 0.6])
    norm, swapped = normalize_orientation(swapped_three_level())
    assert swapped and np.array_equal(norm.dist_a, [0.3, 0.1, 0.6])
    sym = PopulationState(GRID, 0.3, [0.2, 0.3, 0.5], [0.2, 0.3, 0.5])
    assert normalize_orientation(sym) == (sym, False)


def test_utility_max_baseline():
    u, d, _ = utility_max(three_level_state())
    assert u == pytest.approx(1.0, abs=1e-12) and d == pytest.approx(0.2, abs=1e-12)
    sym = PopulationState(GRID, 0.5, [0.2, 0.3, 0.5], [0.2, 0.3, 0.5])
    assert utility_max(sym)[1] == 0.0


def test_reduction_items_three_level():
    items = [(it.qualification, it.group, it.unit_cost, it.capacity) for it in reduction_items(three_level_state())]
    assert items == [(-1.0, "B", 0.5, pytest.approx(0.1)), (2.0, "A", 1.0, 0.6), (-2.0, "B", 1.0, 0.5)]


def test_reduction_items_membership():
    two = PopulationState([-1.0, 1.0], 0.5, [0.3, 0.7], [0.6, 0.4])
    assert len(reduction_items(two)) == 2
    no_b_negatives = PopulationState([-1.0, 1.0], 0.5, [0.3, 0.7], [0.0, 1.0])
    assert {it.group for it in reduction_items(no_b_negatives)} == {"A"}


# -- thresholds ----------------------------------------------------------------

def test_beta_e_examples():
    assert beta_e(three_level_state()) == 0.5
    assert beta_e(PopulationState([-1.0, 1.0], 0.5, [0.2, 0.8], [0.6, 0.4])) == 0.5
    skew = PopulationState([-1.0, 1.0], 0.9, [0.2, 0.8], [0.6, 0.4])
    assert beta_e(skew) == pytest.approx(0.1)


def test_thresholds_undefined_without_gap():
    sym = PopulationState(GRID, 0.5, [0.2, 0.3, 0.5], [0.2, 0.3, 0.5])
    with pytest.raises(ThresholdUndefined):
        beta_e(sym)
    with pytest.raises(ThresholdUndefined):
        beta_s(sym)
    assert is_fully_satisfactory(sym, linear(), 0.1)


def test_effectiveness_examples():
    pop = three_level_state()
    assert not is_effective(pop, linear(), 0.5)
    assert is_effective(pop, linear(), 0.7)
    assert is_effective(pop, quadratic(), 1.3)
    assert not is_effective(pop, quadratic(), 1.2)


def test_dp_constrained_three_level():
    sol = solve_dp_constrained(three_level_state())
    assert sol.delta == 0.0
    assert sol.objective == pytest.approx(0.85, abs=1e-12)
    assert sol.z_allocation == {(-1.0, "B"): pytest.approx(0.1), (2.0, "A"): pytest.approx(0.1)}
    sym = PopulationState(GRID, 0.5, [0.2, 0.3, 0.5], [0.2, 0.3, 0.5])
    empty = solve_dp_constrained(sym)
    assert empty.z_allocation == {} and empty.objective == pytest.approx(utility_max(sym)[0])


def test_dp_constrained_tie_fills_group_a_first():
    # both items cost 0.5; A's positive level is filled before B's negative level
    pop = PopulationState([-1.0, 1.0], 0.5, [0.2, 0.8], [0.6, 0.4])
    sol = solve_dp_constrained(pop)
    assert sol.z_allocation == {(1.0, "A"): pytest.approx(0.4)}


def test_beta_s_examples():
    assert beta_s(three_level_state()) == 1.0
    # gap 0.1 fits inside A's positive level (cost 0.5), B's negative level (cost 1.5) is never used
    single = PopulationState([-3.0, 1.0], 0.5, [0.5, 0.5], [0.6, 0.4])
    assert beta_s(single) == 0.5


def test_full_satisfaction_examples():
    pop = three_level_state()
    assert is_fully_satisfactory(pop, linear(), 1.5)
    assert is_fully_satisfactory(pop, linear(), 1.0)
    assert not is_fully_satisfactory(pop, linear(), 0.99)
    assert not is_fully_satisfactory(pop, quadratic(), 1e9)


def test_min_lambdas():
    pop = three_level_state()
    assert min_lambda_effective(pop, linear()) == 0.5
    assert min_lambda_effective(pop, quadratic()) == pytest.approx(1.25)
    assert min_lambda_effective(pop, hinge(0.5)) == math.inf
    assert min_lambda_satisfactory(pop, linear()) == 1.0
    assert min_lambda_satisfactory(pop, quadratic()) == math.inf
    assert min_lambda_satisfactory(pop, exponential()) == 1.0


# -- penalized solve -------------------------------------------------------------

def test_penalized_golden_values():
    pop = three_level_state()
    sol = solve_penalized(pop, linear(), 0.7)
    assert sol.delta == pytest.approx(0.1, abs=1e-9) and sol.objective == pytest.approx(0.88, abs=1e-9)
    assert np.allclose(sol.policy.select_prob_a, [0, 0, 1]) and np.allclose(sol.policy.select_prob_b, [0, 1, 1])
    sol = solve_penalized(pop, linear(), 1.5)
    assert sol.delta == 0.0 and sol.objective == pytest.approx(0.85, abs=1e-9)
    sol = solve_penalized(pop, linear(), 0.0)
    assert sol.total_mass == 0.0 and sol.objective == pytest.approx(1.0)


def test_policy_restored_after_swap():
    sol = solve_penalized(swapped_three_level(), linear(), 0.7)
    assert sol.swapped
    assert np.allclose(sol.policy.select_prob_b, [0, 0, 1]) and np.allclose(sol.policy.select_prob_a, [0, 1, 1])
    assert (-1.0, "A") in sol.z_allocation


def test_reported_objective_matches_policy():
    for s in range(30):
        pop = random_state(rng_for(s))
        for pen in (linear(), quadratic(), hinge(0.05), exponential()):
            sol = solve_penalized(pop, pen, 0.8)
            assert sol.objective == pytest.approx(profit(pop, sol.policy, pen, 0.8), abs=1e-9)
            assert sol.delta == pytest.approx(disparity(pop, sol.policy), abs=1e-9)
            assert sol.utility == pytest.approx(utility(pop, sol.policy), abs=1e-9)


def test_sweep_matches_thresholds():
    pop = three_level_state()
    lams = [round(0.01 * k, 2) for k in range(121)]
    deltas = [s.delta for s in sweep(pop, linear(), lams)]
    for lam, d in zip(lams, deltas):
        if lam <= 0.5:
            assert d == pytest.approx(0.2, abs=1e-12)
        elif lam < 1.0:
            assert d == pytest.approx(0.1, abs=1e-12)
        else:
            assert d == 0.0
    assert all(a >= b for a, b in zip(deltas, deltas[1:]))


def test_exponential_matches_plain_exp():
    class PlainExp:
        """e^x without the shift; the argmax must be the same."""

        def __call__(self, x):
            return np.exp(np.asarray(x, dtype=float))

        def left_derivative(self, x):
            return math.exp(x)

        right_derivative = left_derivative

    for s in range(20):
        pop = random_state(rng_for(100 + s))
        for lam in (0.05, 0.3, 1.0, 2.5):
            a = solve_penalized(pop, exponential(), lam)
            b = solve_penalized(pop, PlainExp(), lam)
            assert a.delta == pytest.approx(b.delta, abs=1e-9)
            assert a.objective == pytest.approx(b.objective + lam, abs=1e-9)


def test_negative_lambda_rejected():
    with pytest.raises(ValueError):
        solve_penalized(three_level_state(), linear(), -1.0)


# -- independent routes ------------------------------------------------------------

def test_oracle_three_level():
    obj, delta = oracle_solve(three_level_state(), linear(), 0.7, 1e-4)
    assert abs(obj - 0.88) <= 1e-4
    assert oracle_solve(three_level_state(), linear(), 0.0, 0.01)[0] == pytest.approx(1.0)


def test_oracle_on_random_four_level_instances():
    for s in range(50):
        rng = rng_for(300 + s)
        pop = random_state(rng, 4)
        pen = [linear(), quadratic(), hinge(0.05), exponential()][s % 4]
        lam = float(rng.uniform(0, 3))
        assert abs(oracle_solve(pop, pen, lam, 1e-5)[0] - solve_penalized(pop, pen, lam).objective) <= 1e-4


def test_linear_penalty_matches_lp():
    for s in range(60):
        rng = rng_for(2000 + s)
        pop = random_state(rng)
        lam = float(rng.uniform(0, 3))
        assert solve_penalized(pop, linear(), lam).objective == pytest.approx(lp_linear_penalty(pop, lam), abs=1e-8)


def test_parity_optimum_matches_lp():
    for s in range(60):
        pop = random_state(rng_for(3000 + s))
        if utility_max(pop)[1] == 0:
            continue
        assert solve_dp_constrained(pop).objective == pytest.approx(lp_linear_penalty(pop, 0.0, parity=True), abs=1e-8)


def test_greedy_cost_curve_is_cheapest():
    """For a handful of items, compare the greedy cost with every vertex of the fill polytope."""
    import itertools

    for s in range(40):
        pop = random_state(rng_for(4000 + s), int(rng_for(s).integers(2, 5)))
        curve = cost_curve(pop)
        items = curve.items
        if not items:
            continue
        delta_um = utility_max(pop)[1]
        for z in np.linspace(0, delta_um, 7):
            best = math.inf
            # vertices: every item is empty or full except at most one partial item
            for partial in range(len(items)):
                for mask in itertools.product((0, 1), repeat=len(items)):
                    if mask[partial]:
                        continue
                    used = sum(it.capacity for it, m in zip(items, mask) if m)
                    rest = z - used
                    if -1e-12 <= rest <= items[partial].capacity + 1e-12:
                        cost = sum(it.capacity * it.unit_cost for it, m in zip(items, mask) if m)
                        best = min(best, cost + max(rest, 0.0) * items[partial].unit_cost)
            assert curve.cost(z) == pytest.approx(best, abs=1e-12)


# -- structure checks and properties ------------------------------------------------

def test_policy_structure_checker():
    pop = three_level_state()
    assert check_policy_structure(pop, SelectionPolicy([0, 0, 1], [0, 1, 1])) == []
    assert check_policy_structure(pop, SelectionPolicy([1, 0, 0], [0, 1, 1]))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(0, 5), kind=st.integers(0, 3))
def test_solver_outputs_have_optimal_structure(seed, lam, kind):
    pop = random_state(np.random.default_rng(seed))
    pen = [linear(), quadratic(), hinge(0.05), exponential()][kind]
    sol = solve_penalized(pop, pen, lam)
    assert check_policy_structure(pop, sol.policy) == []
    assert 0.0 <= sol.delta <= sol.delta_um + 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), kind=st.integers(0, 3))
def test_disparity_nonincreasing_in_lambda(seed, kind):
    pop = random_state(np.random.default_rng(seed))
    pen = [linear(), quadratic(), hinge(0.05), exponential()][kind]
    deltas = [solve_penalized(pop, pen, lam).delta for lam in np.linspace(0, 4, 41)]
    assert all(a >= b - 1e-9 for a, b in zip(deltas, deltas[1:]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_threshold_predictions_agree_with_solver(seed):
    pop = random_state(np.random.default_rng(seed))
    if utility_max(pop)[1] < 1e-3:
        return
    pen = linear()
    be, bs = beta_e(pop), beta_s(pop)
    lams = list(np.linspace(0, 2 * bs, 25)) + [be, bs]
    for lam in map(float, lams):
        # points within rounding of a threshold sit inside the solver's tie band
        if lam not in (be, bs) and min(abs(lam - be), abs(lam - bs)) < 1e-9 * bs:
            continue
        sol = solve_penalized(pop, pen, lam)
        if is_effective(pop, pen, lam):
            assert sol.delta < sol.delta_um - 1e-12
        else:
            # the UM policy is still optimal (possibly tied with a fairer one)
            um = profit(pop, utility_max(pop)[2], pen, lam)
            assert um >= sol.objective - 1e-12
        assert (sol.delta == 0.0) == is_fully_satisfactory(pop, pen, lam)


def test_beta_s_is_the_parity_threshold_of_the_lp():
    """At lambda = beta_s the LP optimum already equals the parity optimum; just below it does not."""
    tied = PopulationState([-2.0, -1.0, 1.0, 2.0], 0.5, [0.0, 0.1, 0.5, 0.4], [0.3, 0.3, 0.2, 0.2])
    for pop in [tied] + [random_state(rng_for(5000 + s)) for s in range(30)]:
        if utility_max(pop)[1] < 1e-3:
            continue
        bs = beta_s(pop)
        parity = lp_linear_penalty(pop, 0.0, parity=True)
        assert lp_linear_penalty(pop, bs) == pytest.approx(parity, abs=1e-8)
        assert lp_linear_penalty(pop, bs * (1 - 1e-3)) > parity + 1e-12


def test_beta_s_and_parity_cost_ignore_equal_cost_order():
    import itertools

    from fairgate.solver import CostCurve, _beta_s_from_curve

    for s in range(40):
        rng = rng_for(6000 + s)
        # small integer levels with equal weights produce many cost ties
        grid = sorted(set(int(v) for v in rng.choice([-3, -2, -1, 1, 2, 3], 4, replace=False)))
        if min(grid) > 0 or max(grid) < 0 or len(grid) < 2:
            continue
        pop = PopulationState([float(v) for v in grid], 0.5, rng.dirichlet(np.ones(len(grid))),
                              rng.dirichlet(np.ones(len(grid))))
        delta_um = utility_max(pop)[1]
        if delta_um == 0:
            continue
        items = reduction_items(normalize_orientation(pop)[0])
        ref = cost_curve(pop)
        groups = [list(g) for _, g in itertools.groupby(items, key=lambda it: it.unit_cost)]
        for perm in itertools.product(*(itertools.permutations(g) for g in groups)):
            curve = CostCurve.from_items([it for g in perm for it in g])
            assert _beta_s_from_curve(curve, delta_um) == _beta_s_from_curve(ref, delta_um)
            assert curve.cost(delta_um) == pytest.approx(ref.cost(delta_um), abs=1e-12)
