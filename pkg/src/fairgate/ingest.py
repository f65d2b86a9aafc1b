"""Build populations from tabular data.

Two routes: ``load_population`` reads an LSAC-style CSV (one row per
individual, a group column and a raw score column), and ``reduce_features``
replaces individual outcomes by their mean within each (group, feature) cell.
"""
from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import PopulationState, QualificationGrid, ValidationError


@dataclass(frozen=True)
class IngestConfig:
    """How to turn raw rows into qualifications.

    ``bin_width=None`` disables binning: qualifications are ``raw - offset``
    exactly. Otherwise the bin index ``(raw - offset) / bin_width`` is rounded
    half away from zero, in decimal arithmetic on the cell text.

    ``group_b_values=None`` puts every value outside ``group_a_values`` in
    group B; with an explicit set, values in neither set are rejected.
    """

    group_column: str
    group_a_values: frozenset
    value_column: str
    offset: float = 2.95
    bin_width: float | None = 0.1
    zero_policy: str = "error"
    nudge: float = 1e-6
    group_b_values: frozenset | None = None

    def __post_init__(self):
        object.__setattr__(self, "group_a_values", frozenset(self.group_a_values))
        if self.group_b_values is not None:
            object.__setattr__(self, "group_b_values", frozenset(self.group_b_values))
            both = self.group_a_values & self.group_b_values
            if both:
                raise ValidationError(f"values assigned to both groups: {sorted(both)}")
        if self.bin_width is not None and not self.bin_width > 0:
            raise ValidationError(f"bin_width must be > 0, got {self.bin_width}")
        if self.zero_policy not in ("error", "nudge"):
            raise ValidationError(f"zero_policy must be 'error' or 'nudge', got {self.zero_policy!r}")
        if self.zero_policy == "nudge" and not self.nudge > 0:
            raise ValidationError("nudge must be > 0")


@dataclass
class GroupHistogram:
    """Exact per-group counts over qualification keys (Decimal, exact)."""

    counts_a: Counter = field(default_factory=Counter)
    counts_b: Counter = field(default_factory=Counter)

    @property
    def n_a(self) -> int:
        return sum(self.counts_a.values())

    @property
    def n_b(self) -> int:
        return sum(self.counts_b.values())

    def to_population(self) -> PopulationState:
        if self.n_a == 0 or self.n_b == 0:
            raise ValidationError(f"empty group: {self.n_a} rows in A, {self.n_b} rows in B")
        keys = sorted(set(self.counts_a) | set(self.counts_b))
        grid = QualificationGrid([float(k) for k in keys])
        dist_a = np.array([self.counts_a[k] for k in keys], dtype=float) / self.n_a
        dist_b = np.array([self.counts_b[k] for k in keys], dtype=float) / self.n_b
        return PopulationState(grid, self.n_a / (self.n_a + self.n_b), dist_a, dist_b)


def qualification_of(raw: Decimal, config: IngestConfig) -> Decimal:
    shifted = raw - Decimal(str(config.offset))
    if config.bin_width is None:
        y = shifted
    else:
        width = Decimal(str(config.bin_width))
        index = (shifted / width).quantize(Decimal(1), rounding=ROUND_HALF_UP)
        y = index * width
    if y == 0:
        if config.zero_policy == "error":
            raise ValidationError(f"zero qualification from raw value {raw}")
        y = Decimal(str(config.nudge))
    return y.normalize() if y != 0 else y


def _group_of(value: str, config: IngestConfig) -> str | None:
    if value in config.group_a_values:
        return "A"
    if config.group_b_values is None or value in config.group_b_values:
        return "B"
    return None


def histogram_from_rows(rows: Iterable[dict], config: IngestConfig) -> GroupHistogram:
    hist = GroupHistogram()
    unknown = set()
    for i, row in enumerate(rows):
        try:
            group_value = row[config.group_column]
            cell = row[config.value_column]
        except KeyError as exc:
            raise ValidationError(f"missing column {exc.args[0]!r}") from None
        group = _group_of((group_value or "").strip(), config)
        if group is None:
            unknown.add(group_value)
            continue
        try:
            raw = Decimal((cell or "").strip())
            if not raw.is_finite():
                raise InvalidOperation
        except InvalidOperation:
            raise ValidationError(f"row {i}: cannot parse {config.value_column}={cell!r}") from None
        try:
            y = qualification_of(raw, config)
        except ValidationError as exc:
            raise ValidationError(f"row {i}: {exc}") from None
        (hist.counts_a if group == "A" else hist.counts_b)[y] += 1
    if unknown:
        raise ValidationError(f"unrecognized group values: {sorted(map(str, unknown))}")
    return hist


def load_histogram(csv_path, config: IngestConfig) -> GroupHistogram:
    with open(Path(csv_path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (config.group_column, config.value_column):
            if col not in header:
                raise ValidationError(f"missing column {col!r}; header has {header}")
        return histogram_from_rows(reader, config)


def load_population(csv_path, config: IngestConfig) -> PopulationState:
    """Read a CSV into a population: empirical group weights and histograms."""
    return load_histogram(csv_path, config).to_population()


def reduce_features(
    rows: Iterable[tuple],
    group_a,
    bin_width: float | None = None,
    zero_policy: str = "error",
    nudge: float = 1e-6,
) -> PopulationState:
    """Collapse (group, feature_key, outcome) rows onto cell means.

    Every individual is assigned the mean outcome of their (group, feature)
    cell; those means form the qualification grid, and each group's
    distribution is the row share of its cells. Rows whose group is not
    ``group_a`` belong to group B.
    """
    sums: dict = defaultdict(float)
    counts: Counter = Counter()
    for group, key, y in rows:
        cell = ("A" if group == group_a else "B", key)
        sums[cell] += float(y)
        counts[cell] += 1
    n_a = sum(c for (g, _), c in counts.items() if g == "A")
    n_b = sum(c for (g, _), c in counts.items() if g == "B")
    if n_a == 0 or n_b == 0:
        raise ValidationError(f"empty group: {n_a} rows in A, {n_b} rows in B")
    mass: dict = {"A": defaultdict(float), "B": defaultdict(float)}
    for cell, c in counts.items():
        y_hat = sums[cell] / c
        if bin_width is not None:
            y_hat = float(np.sign(y_hat) * np.floor(abs(y_hat) / bin_width + 0.5) * bin_width)
        if y_hat == 0:
            if zero_policy == "error":
                raise ValidationError(f"cell {cell[1]!r} of group {cell[0]} has zero mean outcome")
            y_hat = nudge
        mass[cell[0]][y_hat] += c
    levels = sorted(set(mass["A"]) | set(mass["B"]))
    dist_a = np.array([mass["A"][v] for v in levels]) / n_a
    dist_b = np.array([mass["B"][v] for v in levels]) / n_b
    return PopulationState(QualificationGrid(levels), n_a / (n_a + n_b), dist_a, dist_b)
