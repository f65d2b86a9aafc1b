"""Domain types and policy evaluation.

A population is two groups (``A`` and ``B``) with a finite qualification
distribution each. A selection policy assigns every (group, qualification)
pair a selection probability. This module evaluates utility, selection
disparity, penalties and the penalized profit of any such policy.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

PROB_TOL = 1e-12


class ValidationError(ValueError):
    """Raised when an input violates a type invariant."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class QualificationGrid:
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen_array(self.values)
        if vals.ndim != 1 or vals.size < 2:
            raise ValidationError("grid needs at least 2 qualification levels")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("grid contains a non-finite value")
        zero = np.flatnonzero(vals == 0.0)
        if zero.size:
            raise ValidationError(f"zero qualification at grid index {zero[0]}")
        bad = np.flatnonzero(np.diff(vals) <= 0)
        if bad.size:
            i = bad[0]
            raise ValidationError(
                f"grid not strictly increasing at index {i + 1}: {vals[i]} -> {vals[i + 1]}"
            )
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, QualificationGrid):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(
            np.all(self.values == other.values)
        )

    __hash__ = None

    @property
    def positive(self) -> np.ndarray:
        return self.values > 0

    def tolist(self) -> list[float]:
        return self.values.tolist()


def _check_distribution(name: str, dist, n: int) -> np.ndarray:
    arr = np.array(dist, dtype=float)
    if arr.shape != (n,):
        raise ValidationError(f"{name} has length {arr.size}, grid has {n}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains a non-finite value")
    neg = np.flatnonzero(arr < -PROB_TOL)
    if neg.size:
        i = neg[0]
        raise ValidationError(f"{name}[{i}] = {arr[i]} is negative")
    arr[arr < 0] = 0.0
    total = arr.sum()
    if abs(total - 1.0) > PROB_TOL:
        raise ValidationError(f"{name} distribution sum is {total!r}, expected 1")
    return _frozen_array(arr)


@dataclass(frozen=True, eq=False)
class PopulationState:
    """Group weights plus per-group qualification distributions.

    ``weight_b`` is implied as ``1 - weight_a``. Entries of a distribution in
    ``[-1e-12, 0)`` are clamped to zero; anything more negative is rejected.
    """

    grid: QualificationGrid
    weight_a: float
    dist_a: np.ndarray
    dist_b: np.ndarray

    def __post_init__(self):
        grid = self.grid
        if not isinstance(grid, QualificationGrid):
            grid = QualificationGrid(grid)
        w = float(self.weight_a)
        if not (0.0 < w < 1.0):
            raise ValidationError(f"group weights must both be > 0, got weight_a={w!r}")
        n = len(grid)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "weight_a", w)
        object.__setattr__(self, "dist_a", _check_distribution("dist_a", self.dist_a, n))
        object.__setattr__(self, "dist_b", _check_distribution("dist_b", self.dist_b, n))

    @property
    def weight_b(self) -> float:
        return 1.0 - self.weight_a

    @property
    def values(self) -> np.ndarray:
        return self.grid.values

    def swapped(self) -> "PopulationState":
        return PopulationState(self.grid, self.weight_b, self.dist_b, self.dist_a)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "weight_a": self.weight_a,
            "dist_a": self.dist_a.tolist(),
            "dist_b": self.dist_b.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PopulationState":
        missing = {"grid", "weight_a", "dist_a", "dist_b"} - set(data)
        if missing:
            raise ValidationError(f"population document missing keys: {sorted(missing)}")
        return cls(QualificationGrid(data["grid"]), data["weight_a"], data["dist_a"], data["dist_b"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PopulationState":
        return cls.from_dict(json.loads(text))


def validate_population(state: PopulationState) -> None:
    """Re-check every PopulationState invariant; raise ValidationError on the first failure."""
    PopulationState(state.grid.values, state.weight_a, state.dist_a, state.dist_b)
    if abs(state.weight_a + state.weight_b - 1.0) > PROB_TOL:
        raise ValidationError("group weights do not sum to 1")


@dataclass(frozen=True, eq=False)
class SelectionPolicy:
    """Selection probability per qualification level, one row per group."""

    select_prob_a: np.ndarray
    select_prob_b: np.ndarray

    def __post_init__(self):
        for name in ("select_prob_a", "select_prob_b"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim != 1:
                raise ValidationError(f"{name} must be a vector")
            bad = np.flatnonzero(~((arr >= 0.0) & (arr <= 1.0)))
            if bad.size:
                raise ValidationError(f"{name}[{bad[0]}] = {arr[bad[0]]} outside [0, 1]")
            object.__setattr__(self, name, _frozen_array(arr))
        if self.select_prob_a.shape != self.select_prob_b.shape:
            raise ValidationError("policy rows have different lengths")

    def swapped(self) -> "SelectionPolicy":
        return SelectionPolicy(self.select_prob_b, self.select_prob_a)

    def to_dict(self) -> dict:
        return {"select_prob_a": self.select_prob_a.tolist(), "select_prob_b": self.select_prob_b.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "SelectionPolicy":
        return cls(data["select_prob_a"], data["select_prob_b"])


def _check_policy(state: PopulationState, policy: SelectionPolicy) -> None:
    if policy.select_prob_a.size != len(state.grid):
        raise ValidationError(
            f"policy length {policy.select_prob_a.size} does not match grid length {len(state.grid)}"
        )


def selection_rates(state: PopulationState, policy: SelectionPolicy) -> tuple[float, float]:
    """Return (Pr(D=1|A), Pr(D=1|B))."""
    _check_policy(state, policy)
    return (
        float(np.dot(state.dist_a, policy.select_prob_a)),
        float(np.dot(state.dist_b, policy.select_prob_b)),
    )


def disparity(state: PopulationState, policy: SelectionPolicy) -> float:
    rate_a, rate_b = selection_rates(state, policy)
    return min(abs(rate_a - rate_b), 1.0)


def utility(state: PopulationState, policy: SelectionPolicy) -> float:
    """Expected qualification of the selected individuals, E[DY]."""
    _check_policy(state, policy)
    y = state.values
    return float(
        state.weight_a * np.dot(state.dist_a * policy.select_prob_a, y)
        + state.weight_b * np.dot(state.dist_b * policy.select_prob_b, y)
    )


def profit(state: PopulationState, policy: SelectionPolicy, penalty: "PenaltySpec", lam: float) -> float:
    u = utility(state, policy)
    if lam == 0:
        return u
    return u - lam * float(penalty(disparity(state, policy)))


# -- penalties ---------------------------------------------------------------

PENALTY_KINDS = ("linear", "power", "hinge", "exponential", "custom")
_VALIDATION_POINTS = 1001


@dataclass(frozen=True, eq=False)
class PenaltySpec:
    """A convex nondecreasing penalty g on [0, 1] with g(0) = 0.

    Evaluators accept scalars or numpy arrays. The one-sided derivatives are
    supplied in closed form; nothing here differentiates numerically.
    """

    kind: str
    evaluator: Callable
    left_derivative: Callable
    right_derivative: Callable
    param: float | None = None
    label: str = field(default="")

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ValidationError(f"unknown penalty kind {self.kind!r}")
        if not self.label:
            label = self.kind if self.param is None else f"{self.kind}:{self.param:g}"
            object.__setattr__(self, "label", label)
        _validate_penalty(self)

    def __call__(self, x):
        return self.evaluator(x)


def _validate_penalty(pen: PenaltySpec) -> None:
    xs = np.linspace(0.0, 1.0, _VALIDATION_POINTS)
    g = np.array([float(pen.evaluator(float(x))) for x in xs])
    if abs(g[0]) > PROB_TOL:
        raise ValidationError(f"penalty {pen.label}: g(0) = {g[0]!r}, expected 0")
    inc = np.diff(g)
    scale = max(1.0, float(np.max(np.abs(g))))
    if np.any(inc < -1e-12 * scale):
        raise ValidationError(f"penalty {pen.label} is not nondecreasing on [0, 1]")
    if np.any(np.diff(inc) < -1e-9 * scale):
        raise ValidationError(f"penalty {pen.label} is not convex on [0, 1]")
    for x in xs:
        lo = float(pen.left_derivative(float(x)))
        hi = float(pen.right_derivative(float(x)))
        if lo < 0 or hi < lo:
            raise ValidationError(
                f"penalty {pen.label}: derivatives at {x:g} violate 0 <= g'_- <= g'_+ ({lo!r}, {hi!r})"
            )


def linear() -> PenaltySpec:
    return PenaltySpec(
        "linear",
        lambda x: np.asarray(x, dtype=float) * 1.0,
        lambda x: 1.0,
        lambda x: 1.0,
    )


def power(p: float) -> PenaltySpec:
    """g(x) = x**p for p >= 1; ``power(1)`` is the linear penalty."""
    p = float(p)
    if not p >= 1:
        raise ValidationError(f"power penalty needs p >= 1, got {p}")
    if p == 1:
        return linear()

    def deriv(x):
        return p * float(x) ** (p - 1)

    return PenaltySpec("power", lambda x: np.power(np.asarray(x, dtype=float), p), deriv, deriv, param=p)


def quadratic() -> PenaltySpec:
    return power(2.0)


def hinge(threshold: float) -> PenaltySpec:
    """Zero up to a tolerated disparity, then linear: g(x) = max(0, x - threshold)."""
    t = float(threshold)
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"hinge threshold must lie in [0, 1], got {t}")
    return PenaltySpec(
        "hinge",
        lambda x: np.maximum(np.asarray(x, dtype=float) - t, 0.0),
        lambda x: 1.0 if x > t else 0.0,
        lambda x: 1.0 if x >= t else 0.0,
        param=t,
    )


def exponential() -> PenaltySpec:
    """g(x) = exp(x) - 1; differs from exp(x) by a constant, so maximizers coincide."""
    return PenaltySpec(
        "exponential",
        lambda x: np.expm1(np.asarray(x, dtype=float)),
        lambda x: math.exp(x),
        lambda x: math.exp(x),
    )


def custom(evaluator: Callable, left_derivative: Callable, right_derivative: Callable, label: str = "custom") -> PenaltySpec:
    return PenaltySpec("custom", evaluator, left_derivative, right_derivative, label=label)


def parse_penalty(text: str) -> PenaltySpec:
    """Parse ``kind[:param]``, e.g. ``linear``, ``power:2``, ``hinge:0.05``, ``exp``."""
    kind, _, arg = text.strip().partition(":")
    kind = kind.lower()
    try:
        if kind in ("linear", "lin"):
            return linear()
        if kind in ("quadratic", "square"):
            return quadratic()
        if kind == "power":
            return power(float(arg) if arg else 2.0)
        if kind == "hinge":
            return hinge(float(arg) if arg else 0.0)
        if kind in ("exponential", "exp"):
            return exponential()
    except ValueError as exc:
        raise ValidationError(f"bad penalty parameter in {text!r}: {exc}") from None
    raise ValidationError(f"unknown penalty {text!r}; expected linear, power:p, hinge:t or exponential")


def utility_max_policy(grid: QualificationGrid | Sequence[float]) -> SelectionPolicy:
    """Select exactly the positively qualified, in both groups."""
    values = grid.values if isinstance(grid, QualificationGrid) else np.asarray(grid, dtype=float)
    sel = (values > 0).astype(float)
    return SelectionPolicy(sel, sel)
